#pragma once

// Training orchestration: non-personalized base training, fine-tuning from a
// parent checkpoint, and speaker-partitioned cross-validation plans.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/corpus.hpp"
#include "core/nn.hpp"

namespace fpp {

enum class LossMode { Equal, Weighted };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view name);

struct LrDecay {
  double factor = 0.1;
  std::size_t every_steps = 100000;

  friend bool operator==(const LrDecay&, const LrDecay&) = default;
};

struct TrainConfig {
  double lr = 1e-3;
  std::optional<LrDecay> lr_decay;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double clip_norm = 0.5;
  std::uint64_t seed = 0;
  SequenceUnit sequence_unit = SequenceUnit::Sentence;
  LossMode loss_mode = LossMode::Weighted;
  // Model shape, used when a fresh model is initialized.
  std::size_t d_emb = 32;
  std::size_t hidden = 64;

  /// Throws InvalidInput. Fine-tuning may run zero steps; base training may not.
  void validate(bool allow_zero_steps = false) const;
  double lr_at(std::size_t step) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class Preset { Desk, Paper };
enum class Phase { Base, Finetune };

Preset parse_preset(std::string_view name);
/// Paper: h=1024, d_emb=300, lr 1e-5, 60000 base / 10000 fine-tune steps.
/// Desk: h=64, d_emb=32, lr 5e-3 base / 1e-3 fine-tune, 2000 / 500 steps.
TrainConfig preset_config(Preset preset, Phase phase);
/// Weighted-vs-equal loss comparison schedule: lr 1e-3, x0.1 every 100000 steps, 200000 steps.
TrainConfig loss_comparison_config();

nlohmann::json to_json(const TrainConfig& config);
/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Sentences addressed by (speaker, index) into one corpus.
using SentenceSelection = std::vector<SentenceKey>;
SentenceSelection all_sentences(const AnnotatedCorpus& corpus);
SentenceSelection speaker_sentences(const AnnotatedCorpus& corpus, std::span<const std::string> speakers);

/// Tag counts per class over the selected sentences.
std::vector<std::size_t> class_counts(const AnnotatedCorpus& corpus, const SentenceSelection& selection);

struct Checkpoint {
  std::string id;
  std::optional<std::string> parent_id;
  FpVocabulary vocabulary;
  TrainConfig config;
  std::size_t steps_completed = 0;
  TaggerModel model;
};

/// Content hash over manifest fields and tensor values (id excluded).
std::string compute_checkpoint_id(const Checkpoint& ckpt);

/// JSON manifest (key-sorted), a zero byte, then little-endian f32 tensors.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Precomputed-embedding checkpoints need their vectors: pass them, or the
/// manifest's recorded path is tried.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const PrecomputedEmbeddings> vectors = nullptr);
Checkpoint deserialize_checkpoint(const std::string& bytes, std::shared_ptr<const PrecomputedEmbeddings> vectors = nullptr);

struct TrainProgress {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::optional<double> validation_loss;
};

struct TrainOptions {
  /// Switches the model to file-supplied vectors instead of a trainable lookup.
  std::shared_ptr<const PrecomputedEmbeddings> precomputed;
  std::string precomputed_path;
  /// Sentences whose loss is reported alongside training loss; never trained on.
  SentenceSelection validation;
  std::size_t log_every = 100;
  std::function<void(const TrainProgress&)> progress;
};

Checkpoint train_base(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const TrainConfig& config,
                      const TrainOptions& options = {});
Checkpoint train_base(const AnnotatedCorpus& corpus, const TrainConfig& config, const TrainOptions& options = {});

/// Continues from `base` on the selected sentences. Topology and token table
/// are inherited; class weights are recomputed from the selection when weighted.
Checkpoint finetune(const Checkpoint& base, const AnnotatedCorpus& corpus, const SentenceSelection& selection,
                    const TrainConfig& config, const TrainOptions& options = {});
Checkpoint finetune(const Checkpoint& base, const AnnotatedCorpus& corpus, const TrainConfig& config,
                    const TrainOptions& options = {});

/// Mean weighted loss of `model` over a selection (no gradients).
double evaluate_loss(const TaggerModel& model, const AnnotatedCorpus& corpus, const SentenceSelection& selection);

enum class CvMode { SpeakerOpen, SpeakerClose };

std::string_view to_string(CvMode mode);
CvMode parse_cv_mode(std::string_view name);

struct CvPlan {
  std::vector<std::vector<std::string>> folds;
  CvMode mode = CvMode::SpeakerOpen;
  double ratio = 9.0;  // train : validation, per speaker, speaker-close only
  std::uint64_t seed = 0;
};

/// Seeded shuffle of the sorted speaker list, then round-robin over k folds.
CvPlan make_cv_plan(std::vector<std::string> speaker_ids, std::size_t k, CvMode mode, double ratio, std::uint64_t seed);

struct CvFold {
  SentenceSelection train;
  SentenceSelection open_eval;   // every sentence of the held-out speakers
  SentenceSelection close_eval;  // held-out sentences of training speakers (speaker-close only)
};

/// Materializes fold `index`. Speaker-close keeps about 1/(ratio+1) of each
/// training speaker's sentences out of training for validation.
CvFold fold_split(const CvPlan& plan, const AnnotatedCorpus& corpus, std::size_t index);

nlohmann::json to_json(const CvPlan& plan);
CvPlan cv_plan_from_json(const nlohmann::json& j);

}  // namespace fpp
