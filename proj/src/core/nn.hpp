#pragma once

// BLSTM slot tagger: embedding provider -> single-layer bidirectional LSTM ->
// linear projection to one logit per tag class. Computation is double
// precision; reverse-mode gradients are hand-derived.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "core/corpus.hpp"

namespace fpp {

using Matrix = Eigen::MatrixXd;

/// Identifies a sentence inside a corpus: speaker id plus position in that speaker's list.
struct SentenceKey {
  std::string speaker;
  std::size_t index = 0;

  friend auto operator<=>(const SentenceKey&, const SentenceKey&) = default;
};

/// Token -> embedding-table row. Row 0 is the OOV bucket, row 1 the
/// sentence-end marker, known tokens follow in sorted order.
class TokenTable {
 public:
  static constexpr std::size_t kOovRow = 0;
  static constexpr std::size_t kEndRow = 1;

  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> tokens);
  static TokenTable from_corpus(const AnnotatedCorpus& corpus);

  std::size_t row(std::string_view token) const;
  std::size_t rows() const { return tokens_.size() + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-sentence vectors supplied from outside (e.g. a contextual encoder).
/// A sentence holds either one row per morpheme (the end slot then gets a
/// zero vector) or one extra trailing row used as the end-slot vector.
class PrecomputedEmbeddings {
 public:
  explicit PrecomputedEmbeddings(std::size_t dim = 0) : dim_(dim) {}

  static PrecomputedEmbeddings load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  void insert(const SentenceKey& key, Eigen::MatrixXf vectors);
  const Eigen::MatrixXf* find(const SentenceKey& key) const;

  friend bool operator==(const PrecomputedEmbeddings& a, const PrecomputedEmbeddings& b) {
    return a.dim_ == b.dim_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dim_;
  std::map<SentenceKey, Eigen::MatrixXf> vectors_;
};

struct TrainableLookup {
  TokenTable table;
};
struct PrecomputedSource {
  std::shared_ptr<const PrecomputedEmbeddings> vectors;
  std::string path;  // informational, recorded in checkpoints
};
using EmbeddingProvider = std::variant<TrainableLookup, PrecomputedSource>;

/// Unit fed to the BLSTM as one sequence.
enum class SequenceUnit { Sentence, BreathGroup };

std::string_view to_string(SequenceUnit unit);
SequenceUnit parse_sequence_unit(std::string_view name);

/// Half-open slot range [begin, end) of one model input sequence.
struct SlotRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Sentence unit: one range over every slot. Breath-group unit: one range per
/// breath group, the last one also covering the sentence-end slot.
std::vector<SlotRange> sequence_ranges(const Sentence& sentence, SequenceUnit unit);

struct Hyper {
  std::size_t d_emb = 32;
  std::size_t hidden = 64;
  std::size_t classes = 14;
  std::uint64_t seed = 0;
  SequenceUnit sequence_unit = SequenceUnit::Sentence;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

/// Gate order inside a stacked LSTM matrix.
enum class Gate : std::size_t { Input = 0, Forget = 1, Cell = 2, Output = 3 };

/// All trainable tensors. Biases are stored as column matrices.
/// LSTM weights stack the four gates row-wise: W is [4h x (d_emb + h)].
struct Parameters {
  Matrix embedding;  // [table rows x d_emb], empty for precomputed providers
  Matrix fwd_w, fwd_b;
  Matrix bwd_w, bwd_b;
  Matrix out_w;  // [2h x C]
  Matrix out_b;  // [C x 1]

  /// Visits tensors in checkpoint order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("embedding", self.embedding);
    f("fwd.W", self.fwd_w);
    f("fwd.b", self.fwd_b);
    f("bwd.W", self.bwd_w);
    f("bwd.b", self.bwd_b);
    f("out.W", self.out_w);
    f("out.b", self.out_b);
  }
  template <class F> void for_each(F&& f) { visit(*this, f); }
  template <class F> void for_each(F&& f) const { visit(*this, f); }

  /// Same shapes, all zeros.
  Parameters zeros_like() const;
  std::size_t value_count() const;
  bool operator==(const Parameters& other) const;
};

/// Positive per-class loss weights with mean 1.
struct ClassWeights {
  std::vector<double> w;

  static ClassWeights uniform(std::size_t classes) { return {std::vector<double>(classes, 1.0)}; }
};

/// raw_c = 1 / max(count_c / total, floor), rescaled to mean 1.
ClassWeights class_weights_from_counts(std::span<const std::size_t> counts, double floor = 1e-6);

struct TaggerModel {
  EmbeddingProvider embedding;
  Parameters params;
  ClassWeights class_weights;
  Hyper hyper;

  bool uses_lookup() const { return std::holds_alternative<TrainableLookup>(embedding); }
};

/// Fresh model: uniform(+-sqrt(1/fan_in)) weights, forget-gate bias 1, other biases 0.
TaggerModel init_model(const Hyper& hyper, EmbeddingProvider provider);

struct Embedded {
  Matrix vectors;                 // [slots x d_emb]
  std::vector<std::size_t> rows;  // lookup rows per slot, empty for precomputed
};

Embedded embed(const TaggerModel& model, const Sentence& sentence, const SentenceKey& key);

struct DirectionTrace {
  Matrix inputs;  // [(d+h) x T] concatenated [x_t; h_prev]
  Matrix gates;   // [4h x T] activated gates
  Matrix cells;   // [h x T]
  Matrix hidden;  // [h x T]
};

struct ForwardTrace {
  DirectionTrace fwd, bwd;
  Matrix states;  // [T x 2h] = [h_fwd ; h_bwd] per slot
  Matrix logits;  // [T x C]
};

ForwardTrace forward_trace(const Parameters& params, const Matrix& embeddings);
/// Logits [T x C]. Throws Runtime on non-finite values.
Matrix forward(const TaggerModel& model, const Matrix& embeddings);

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;
};

/// Un-normalized pieces of the weighted loss, for pooling over a batch.
struct LossSum {
  double weighted_nll = 0.0;  // sum_t w[y_t] * -log p_t[y_t]
  double weight_sum = 0.0;    // sum_t w[y_t]
  Matrix dlogits;             // gradient of weighted_nll
};

LossSum weighted_ce_sum(const Matrix& logits, std::span<const FpTag> gold, const ClassWeights& weights);
/// Weighted mean cross-entropy: sum_t w[y_t] * -log softmax(logits_t)[y_t] / sum_t w[y_t].
LossResult weighted_ce_loss(const Matrix& logits, std::span<const FpTag> gold, const ClassWeights& weights);

Matrix softmax_rows(const Matrix& logits);

/// Accumulates gradients of sum(dlogits .* logits) into `grads` and returns
/// d(embeddings). Lookup rows receive their slots' embedding gradients.
Matrix backward(const Parameters& params, const ForwardTrace& trace, const Matrix& embeddings, const Matrix& dlogits,
                std::span<const std::size_t> lookup_rows, Parameters& grads);

struct AdamState {
  Parameters m, v;
  std::uint64_t step = 0;

  static AdamState for_params(const Parameters& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

struct StepInfo {
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Global-norm clipping followed by one bias-corrected Adam update
/// (beta1 0.9, beta2 0.999, eps 1e-8). Throws Runtime on non-finite gradients.
StepInfo clip_and_step(Parameters& params, Parameters& grads, AdamState& state, double lr, double max_norm);

/// Rounds every parameter to the nearest float so checkpoints round-trip exactly.
void round_to_float(Parameters& params);

/// Per-slot argmax; ties go to the smaller class, so NO_FP wins any tie.
std::vector<FpTag> argmax_tags(const Matrix& logits);
std::vector<FpTag> predict_tags(const TaggerModel& model, const Sentence& sentence, const SentenceKey& key);

}  // namespace fpp
