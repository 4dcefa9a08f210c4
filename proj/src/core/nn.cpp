#include "core/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "core/error.hpp"

namespace fpp {

namespace {

constexpr char kEmbeddingMagic[6] = {'F', 'P', 'E', 'M', 'B', '1'};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) invalid(std::string("truncated embedding file while reading ") + what);
  return value;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::Runtime, std::string("non-finite values in ") + what + " (training diverged?)");
}

// One LSTM direction over the columns of `x` ([d x T]); `reverse` walks T-1..0.
DirectionTrace run_direction(const Matrix& w, const Matrix& b, const Matrix& x, bool reverse) {
  const Eigen::Index d = x.rows(), steps = x.cols(), h = b.rows() / 4;
  DirectionTrace tr;
  tr.inputs.resize(d + h, steps);
  tr.gates.resize(4 * h, steps);
  tr.cells.resize(h, steps);
  tr.hidden.resize(h, steps);

  // Input contribution for every step at once; the recurrent part is added per step.
  const Matrix zx = (w.leftCols(d) * x).colwise() + b.col(0);
  const auto w_rec = w.rightCols(h);

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h), c_prev = Eigen::VectorXd::Zero(h);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    tr.inputs.col(t).head(d) = x.col(t);
    tr.inputs.col(t).tail(h) = h_prev;
    Eigen::VectorXd z = zx.col(t) + w_rec * h_prev;
    for (Eigen::Index j = 0; j < h; ++j) {
      z(j) = sigmoid(z(j));
      z(h + j) = sigmoid(z(h + j));
      z(2 * h + j) = std::tanh(z(2 * h + j));
      z(3 * h + j) = sigmoid(z(3 * h + j));
    }
    const auto i = z.segment(0, h).array(), f = z.segment(h, h).array(), g = z.segment(2 * h, h).array(),
               o = z.segment(3 * h, h).array();
    Eigen::VectorXd c = (f * c_prev.array() + i * g).matrix();
    Eigen::VectorXd hid = (o * c.array().tanh()).matrix();
    tr.gates.col(t) = z;
    tr.cells.col(t) = c;
    tr.hidden.col(t) = hid;
    h_prev = std::move(hid);
    c_prev = std::move(c);
  }
  return tr;
}

// Backpropagates dh ([h x T]) through one direction. Accumulates into dw/db and dx ([d x T]).
void backprop_direction(const Matrix& w, const DirectionTrace& tr, const Matrix& dh, bool reverse, Matrix& dw, Matrix& db,
                        Matrix& dx) {
  const Eigen::Index h = tr.hidden.rows(), steps = tr.hidden.cols(), d = tr.inputs.rows() - h;
  Matrix dz(4 * h, steps);
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(h), dc_carry = Eigen::VectorXd::Zero(h);

  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;  // previous step in processing order
    const bool has_prev = k > 0;

    const auto gates = tr.gates.col(t);
    const Eigen::ArrayXd i = gates.segment(0, h), f = gates.segment(h, h), g = gates.segment(2 * h, h),
                         o = gates.segment(3 * h, h);
    const Eigen::ArrayXd tc = tr.cells.col(t).array().tanh();
    const Eigen::ArrayXd c_prev = has_prev ? Eigen::ArrayXd(tr.cells.col(prev).array()) : Eigen::ArrayXd::Zero(h);

    const Eigen::ArrayXd dhid = dh.col(t).array() + dh_carry.array();
    const Eigen::ArrayXd dc = dhid * o * (1.0 - tc * tc) + dc_carry.array();

    dz.col(t).segment(0, h) = (dc * g * i * (1.0 - i)).matrix();
    dz.col(t).segment(h, h) = (dc * c_prev * f * (1.0 - f)).matrix();
    dz.col(t).segment(2 * h, h) = (dc * i * (1.0 - g * g)).matrix();
    dz.col(t).segment(3 * h, h) = (dhid * tc * o * (1.0 - o)).matrix();
    dc_carry = (dc * f).matrix();
    dh_carry = w.rightCols(h).transpose() * dz.col(t);
  }
  dw.noalias() += dz * tr.inputs.transpose();
  db.col(0) += dz.rowwise().sum();
  dx.noalias() += w.leftCols(d).transpose() * dz;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sequence units

std::string_view to_string(SequenceUnit unit) { return unit == SequenceUnit::Sentence ? "sentence" : "breath_group"; }

SequenceUnit parse_sequence_unit(std::string_view name) {
  if (name == "sentence") return SequenceUnit::Sentence;
  if (name == "breath_group") return SequenceUnit::BreathGroup;
  invalid("sequence_unit must be \"sentence\" or \"breath_group\", got \"" + std::string(name) + "\"");
}

std::vector<SlotRange> sequence_ranges(const Sentence& sentence, SequenceUnit unit) {
  if (unit == SequenceUnit::Sentence) return {{0, sentence.slot_count()}};
  std::vector<SlotRange> out;
  std::size_t begin = 0;
  for (const auto& bg : sentence.breath_groups) {
    out.push_back({begin, begin + bg.size()});
    begin += bg.size();
  }
  out.back().end += 1;
  return out;
}

// ---------------------------------------------------------------------------
// Embedding providers

TokenTable::TokenTable(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::sort(tokens_.begin(), tokens_.end());
  tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i + 2);
}

TokenTable TokenTable::from_corpus(const AnnotatedCorpus& corpus) {
  std::set<std::string> seen;
  for (const auto& [id, sentences] : corpus.speakers)
    for (const auto& s : sentences)
      for (const auto& bg : s.breath_groups) seen.insert(bg.begin(), bg.end());
  return TokenTable(std::vector<std::string>(seen.begin(), seen.end()));
}

std::size_t TokenTable::row(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kOovRow : it->second;
}

void PrecomputedEmbeddings::insert(const SentenceKey& key, Eigen::MatrixXf vectors) {
  if (static_cast<std::size_t>(vectors.cols()) != dim_)
    invalid("precomputed vectors for \"" + key.speaker + "\" #" + std::to_string(key.index) + " have dimension " +
            std::to_string(vectors.cols()) + ", expected " + std::to_string(dim_));
  vectors_[key] = std::move(vectors);
}

const Eigen::MatrixXf* PrecomputedEmbeddings::find(const SentenceKey& key) const {
  auto it = vectors_.find(key);
  return it == vectors_.end() ? nullptr : &it->second;
}

void PrecomputedEmbeddings::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write embedding file " + path.string());
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  write_pod<std::uint64_t>(out, vectors_.size());
  for (const auto& [key, m] : vectors_) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(key.speaker.size()));
    out.write(key.speaker.data(), static_cast<std::streamsize>(key.speaker.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(key.index));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<float>(out, m(r, c));
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open embedding file " + path.string());
  char magic[sizeof kEmbeddingMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0)
    invalid(path.string() + " is not an FPEMB1 embedding file");
  const auto dim = read_pod<std::uint32_t>(in, "dimension");
  const auto count = read_pod<std::uint64_t>(in, "sentence count");
  if (dim == 0) invalid("embedding dimension must be positive");

  PrecomputedEmbeddings out(dim);
  for (std::uint64_t s = 0; s < count; ++s) {
    const auto key_len = read_pod<std::uint32_t>(in, "key length");
    std::string speaker(key_len, '\0');
    if (!in.read(speaker.data(), key_len)) invalid("truncated embedding file while reading a sentence key");
    const auto index = read_pod<std::uint32_t>(in, "sentence index");
    const auto slots = read_pod<std::uint32_t>(in, "slot count");
    Eigen::MatrixXf m(slots, dim);
    for (std::uint32_t r = 0; r < slots; ++r)
      for (std::uint32_t c = 0; c < dim; ++c) m(r, c) = read_pod<float>(in, "vector data");
    SentenceKey key{std::move(speaker), index};
    if (out.find(key)) invalid("duplicate sentence key in embedding file");
    out.insert(key, std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](std::string_view, Matrix& m) { m.setZero(); });
  return out;
}

std::size_t Parameters::value_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool Parameters::operator==(const Parameters& other) const {
  return embedding == other.embedding && fwd_w == other.fwd_w && fwd_b == other.fwd_b && bwd_w == other.bwd_w &&
         bwd_b == other.bwd_b && out_w == other.out_w && out_b == other.out_b;
}

ClassWeights class_weights_from_counts(std::span<const std::size_t> counts, double floor) {
  if (!(floor > 0.0)) invalid("class weight floor must be positive");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total == 0.0) invalid("class counts are all zero");
  ClassWeights out;
  out.w.reserve(counts.size());
  double sum = 0.0;
  for (auto c : counts) {
    out.w.push_back(1.0 / std::max(static_cast<double>(c) / total, floor));
    sum += out.w.back();
  }
  const double scale = static_cast<double>(counts.size()) / sum;
  for (double& x : out.w) x *= scale;
  return out;
}

TaggerModel init_model(const Hyper& hyper, EmbeddingProvider provider) {
  if (hyper.d_emb == 0 || hyper.hidden == 0 || hyper.classes < 2) invalid("model dimensions must be positive with at least 2 classes");
  const auto d = static_cast<Eigen::Index>(hyper.d_emb), h = static_cast<Eigen::Index>(hyper.hidden),
             c = static_cast<Eigen::Index>(hyper.classes);

  std::mt19937_64 rng(hyper.seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    const double bound = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };
  auto lstm_bias = [&] {
    Matrix b = Matrix::Zero(4 * h, 1);
    b.middleRows(static_cast<Eigen::Index>(Gate::Forget) * h, h).setOnes();
    return b;
  };

  TaggerModel model{std::move(provider), {}, ClassWeights::uniform(hyper.classes), hyper};
  if (const auto* lookup = std::get_if<TrainableLookup>(&model.embedding)) {
    // A lookup is a linear map of a one-hot input, so its fan-in is 1.
    model.params.embedding = uniform(static_cast<Eigen::Index>(lookup->table.rows()), d, 1.0);
  } else {
    const auto& pre = std::get<PrecomputedSource>(model.embedding);
    if (!pre.vectors || pre.vectors->dim() != hyper.d_emb) invalid("precomputed embedding dimension does not match d_emb");
    model.params.embedding = Matrix(0, d);
  }
  model.params.fwd_w = uniform(4 * h, d + h, static_cast<double>(d + h));
  model.params.fwd_b = lstm_bias();
  model.params.bwd_w = uniform(4 * h, d + h, static_cast<double>(d + h));
  model.params.bwd_b = lstm_bias();
  model.params.out_w = uniform(2 * h, c, static_cast<double>(2 * h));
  model.params.out_b = Matrix::Zero(c, 1);
  round_to_float(model.params);
  return model;
}

Embedded embed(const TaggerModel& model, const Sentence& sentence, const SentenceKey& key) {
  const auto slots = static_cast<Eigen::Index>(sentence.slot_count());
  const auto d = static_cast<Eigen::Index>(model.hyper.d_emb);
  Embedded out;

  if (const auto* lookup = std::get_if<TrainableLookup>(&model.embedding)) {
    out.rows.reserve(sentence.slot_count());
    for (auto m : sentence.morphemes()) out.rows.push_back(lookup->table.row(m));
    out.rows.push_back(TokenTable::kEndRow);
    out.vectors.resize(slots, d);
    for (Eigen::Index t = 0; t < slots; ++t) out.vectors.row(t) = model.params.embedding.row(static_cast<Eigen::Index>(out.rows[t]));
    return out;
  }

  const auto& pre = std::get<PrecomputedSource>(model.embedding);
  const Eigen::MatrixXf* vectors = pre.vectors ? pre.vectors->find(key) : nullptr;
  if (!vectors) invalid("no precomputed vectors for speaker \"" + key.speaker + "\" sentence " + std::to_string(key.index));
  if (vectors->cols() != d) invalid("precomputed vector dimension mismatch");
  if (vectors->rows() != slots - 1 && vectors->rows() != slots)
    invalid("precomputed vectors for speaker \"" + key.speaker + "\" sentence " + std::to_string(key.index) + " cover " +
            std::to_string(vectors->rows()) + " slots, sentence has " + std::to_string(sentence.morpheme_count()) + " morphemes");
  out.vectors = Matrix::Zero(slots, d);
  out.vectors.topRows(vectors->rows()) = vectors->cast<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Forward / loss / backward

ForwardTrace forward_trace(const Parameters& params, const Matrix& embeddings) {
  const Matrix x = embeddings.transpose();
  ForwardTrace tr;
  tr.fwd = run_direction(params.fwd_w, params.fwd_b, x, false);
  tr.bwd = run_direction(params.bwd_w, params.bwd_b, x, true);
  const Eigen::Index h = params.fwd_b.rows() / 4;
  tr.states.resize(embeddings.rows(), 2 * h);
  tr.states.leftCols(h) = tr.fwd.hidden.transpose();
  tr.states.rightCols(h) = tr.bwd.hidden.transpose();
  tr.logits = (tr.states * params.out_w).rowwise() + params.out_b.col(0).transpose();
  return tr;
}

Matrix forward(const TaggerModel& model, const Matrix& embeddings) {
  if (static_cast<std::size_t>(embeddings.cols()) != model.hyper.d_emb) invalid("embedding dimension does not match the model");
  Matrix logits = forward_trace(model.params, embeddings).logits;
  check_finite(logits, "logits");
  return logits;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  return p.array().colwise() / p.rowwise().sum().array();
}

LossSum weighted_ce_sum(const Matrix& logits, std::span<const FpTag> gold, const ClassWeights& weights) {
  if (static_cast<std::size_t>(logits.rows()) != gold.size()) invalid("gold tag count does not match logit rows");
  if (static_cast<std::size_t>(logits.cols()) != weights.w.size()) invalid("class weight count does not match logit columns");
  LossSum out;
  out.dlogits = softmax_rows(logits);
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const auto y = static_cast<Eigen::Index>(gold[static_cast<std::size_t>(t)].cls);
    if (y >= logits.cols()) invalid("gold class outside the model's tag space");
    const double w = weights.w[static_cast<std::size_t>(y)];
    const double row_max = logits.row(t).maxCoeff();
    const double lse = row_max + std::log((logits.row(t).array() - row_max).exp().sum());
    out.weighted_nll += w * (lse - logits(t, y));
    out.weight_sum += w;
    out.dlogits(t, y) -= 1.0;
    out.dlogits.row(t) *= w;
  }
  return out;
}

LossResult weighted_ce_loss(const Matrix& logits, std::span<const FpTag> gold, const ClassWeights& weights) {
  auto sum = weighted_ce_sum(logits, gold, weights);
  if (sum.weight_sum == 0.0) return {0.0, Matrix::Zero(logits.rows(), logits.cols())};
  return {sum.weighted_nll / sum.weight_sum, sum.dlogits / sum.weight_sum};
}

Matrix backward(const Parameters& params, const ForwardTrace& trace, const Matrix& embeddings, const Matrix& dlogits,
                std::span<const std::size_t> lookup_rows, Parameters& grads) {
  const Eigen::Index h = params.fwd_b.rows() / 4;
  grads.out_w.noalias() += trace.states.transpose() * dlogits;
  grads.out_b.col(0) += dlogits.colwise().sum().transpose();
  const Matrix dstates = dlogits * params.out_w.transpose();  // [T x 2h]

  Matrix dx = Matrix::Zero(embeddings.cols(), embeddings.rows());
  backprop_direction(params.fwd_w, trace.fwd, dstates.leftCols(h).transpose(), false, grads.fwd_w, grads.fwd_b, dx);
  backprop_direction(params.bwd_w, trace.bwd, dstates.rightCols(h).transpose(), true, grads.bwd_w, grads.bwd_b, dx);

  Matrix d_embeddings = dx.transpose();
  for (std::size_t t = 0; t < lookup_rows.size(); ++t)
    grads.embedding.row(static_cast<Eigen::Index>(lookup_rows[t])) += d_embeddings.row(static_cast<Eigen::Index>(t));
  return d_embeddings;
}

// ---------------------------------------------------------------------------
// Optimizer

StepInfo clip_and_step(Parameters& params, Parameters& grads, AdamState& state, double lr, double max_norm) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (!(lr > 0.0) || !(max_norm > 0.0)) invalid("learning rate and clip norm must be positive");

  double sq = 0.0;
  grads.for_each([&](std::string_view name, const Matrix& g) {
    if (!g.allFinite()) fail(ErrorKind::Runtime, "non-finite gradient in " + std::string(name));
    sq += g.squaredNorm();
  });
  StepInfo info{std::sqrt(sq), false};
  if (info.grad_norm > max_norm) {
    const double scale = max_norm / info.grad_norm;
    grads.for_each([&](std::string_view, Matrix& g) { g *= scale; });
    info.clipped = true;
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  std::vector<Matrix*> p_list, g_list, m_list, v_list;
  params.for_each([&](std::string_view, Matrix& m) { p_list.push_back(&m); });
  grads.for_each([&](std::string_view, Matrix& m) { g_list.push_back(&m); });
  state.m.for_each([&](std::string_view, Matrix& m) { m_list.push_back(&m); });
  state.v.for_each([&](std::string_view, Matrix& m) { v_list.push_back(&m); });
  for (std::size_t k = 0; k < p_list.size(); ++k) {
    auto& p = *p_list[k];
    const auto& g = *g_list[k];
    auto& m = *m_list[k];
    auto& v = *v_list[k];
    if (p.rows() != g.rows() || p.cols() != g.cols() || m.rows() != g.rows() || m.cols() != g.cols())
      invalid("parameter/gradient/optimizer shape mismatch");
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
  return info;
}

void round_to_float(Parameters& params) {
  params.for_each([](std::string_view, Matrix& m) {
    m = m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
  });
}

std::vector<FpTag> argmax_tags(const Matrix& logits) {
  std::vector<FpTag> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(t, c) > logits(t, best)) best = c;
    out.push_back(FpTag{static_cast<std::uint32_t>(best)});
  }
  return out;
}

std::vector<FpTag> predict_tags(const TaggerModel& model, const Sentence& sentence, const SentenceKey& key) {
  const Embedded e = embed(model, sentence, key);
  std::vector<FpTag> tags;
  tags.reserve(sentence.slot_count());
  for (const auto& range : sequence_ranges(sentence, model.hyper.sequence_unit)) {
    const auto part = argmax_tags(
        forward(model, e.vectors.middleRows(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.end - range.begin))));
    tags.insert(tags.end(), part.begin(), part.end());
  }
  return tags;
}

}  // namespace fpp
