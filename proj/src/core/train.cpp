#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <random>

#include "core/error.hpp"

namespace fpp {

namespace {

using json = nlohmann::json;

struct Unit {
  const Sentence* sentence;
  SentenceKey key;
  SlotRange range;
};

std::vector<Unit> make_units(const AnnotatedCorpus& corpus, const SentenceSelection& selection, SequenceUnit unit) {
  std::vector<Unit> out;
  for (const auto& key : selection) {
    const auto& sentences = corpus.sentences_of(key.speaker);
    if (key.index >= sentences.size())
      invalid("speaker \"" + key.speaker + "\" has no sentence " + std::to_string(key.index));
    const Sentence* s = &sentences[key.index];
    for (const auto& r : sequence_ranges(*s, unit)) out.push_back({s, key, r});
  }
  return out;
}

struct UnitPass {
  ForwardTrace trace;
  Matrix embeddings;
  std::vector<std::size_t> rows;
  LossSum loss;
};

UnitPass run_unit(const TaggerModel& model, const Unit& u) {
  const Embedded e = embed(model, *u.sentence, u.key);
  const auto begin = static_cast<Eigen::Index>(u.range.begin), len = static_cast<Eigen::Index>(u.range.end - u.range.begin);
  UnitPass pass;
  pass.embeddings = e.vectors.middleRows(begin, len);
  if (!e.rows.empty()) pass.rows.assign(e.rows.begin() + begin, e.rows.begin() + begin + len);
  pass.trace = forward_trace(model.params, pass.embeddings);
  const std::span<const FpTag> gold(u.sentence->fp_tags.data() + u.range.begin, u.range.end - u.range.begin);
  pass.loss = weighted_ce_sum(pass.trace.logits, gold, model.class_weights);
  return pass;
}

double mean_loss(const TaggerModel& model, const std::vector<Unit>& units) {
  double nll = 0.0, weight = 0.0;
  for (const auto& u : units) {
    const auto pass = run_unit(model, u);
    nll += pass.loss.weighted_nll;
    weight += pass.loss.weight_sum;
  }
  return weight > 0.0 ? nll / weight : 0.0;
}

// Runs `config.steps` optimizer steps over `units`.
void run_training(TaggerModel& model, const std::vector<Unit>& units, const std::vector<Unit>& validation,
                  const TrainConfig& config, const TrainOptions& options) {
  if (config.steps == 0) return;
  if (units.empty()) invalid("training split is empty");

  AdamState adam = AdamState::for_params(model.params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  std::vector<UnitPass> batch;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    double weight_sum = 0.0, nll = 0.0;
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        if (!batch.empty()) break;  // an epoch ends with a short batch
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(run_unit(model, units[order[cursor++]]));
      nll += batch.back().loss.weighted_nll;
      weight_sum += batch.back().loss.weight_sum;
    }

    const double loss = weight_sum > 0.0 ? nll / weight_sum : 0.0;
    if (!std::isfinite(loss))
      fail(ErrorKind::Runtime, "training diverged at step " + std::to_string(step) + ": loss is " + std::to_string(loss));

    Parameters grads = model.params.zeros_like();
    if (weight_sum > 0.0) {
      for (const auto& pass : batch)
        backward(model.params, pass.trace, pass.embeddings, pass.loss.dlogits / weight_sum, pass.rows, grads);
    }
    const double lr = config.lr_at(step - 1);
    const auto info = clip_and_step(model.params, grads, adam, lr, config.clip_norm);
    round_to_float(model.params);

    if (options.progress && (step % options.log_every == 0 || step == config.steps)) {
      TrainProgress p{step, loss, lr, info.grad_norm, std::nullopt};
      if (!validation.empty()) p.validation_loss = mean_loss(model, validation);
      options.progress(p);
    }
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(LossMode mode) { return mode == LossMode::Equal ? "equal" : "weighted"; }

LossMode parse_loss_mode(std::string_view name) {
  if (name == "equal") return LossMode::Equal;
  if (name == "weighted") return LossMode::Weighted;
  invalid("loss_mode must be \"equal\" or \"weighted\", got \"" + std::string(name) + "\"");
}

void TrainConfig::validate(bool allow_zero_steps) const {
  if (!(lr > 0.0) || !std::isfinite(lr)) invalid("lr must be positive");
  if (steps == 0 && !allow_zero_steps) invalid("steps must be positive");
  if (batch_size == 0) invalid("batch_size must be positive");
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) invalid("clip_norm must be positive");
  if (d_emb == 0 || hidden == 0) invalid("d_emb and hidden must be positive");
  if (lr_decay) {
    if (!(lr_decay->factor > 0.0)) invalid("lr_decay.factor must be positive");
    if (lr_decay->every_steps == 0) invalid("lr_decay.every_steps must be positive");
  }
}

double TrainConfig::lr_at(std::size_t step) const {
  if (!lr_decay) return lr;
  return lr * std::pow(lr_decay->factor, static_cast<double>(step / lr_decay->every_steps));
}

Preset parse_preset(std::string_view name) {
  if (name == "desk") return Preset::Desk;
  if (name == "paper") return Preset::Paper;
  invalid("preset must be \"desk\" or \"paper\", got \"" + std::string(name) + "\"");
}

TrainConfig preset_config(Preset preset, Phase phase) {
  TrainConfig c;
  c.batch_size = 32;
  c.clip_norm = 0.5;
  c.loss_mode = LossMode::Weighted;
  if (preset == Preset::Paper) {
    c.d_emb = 300;
    c.hidden = 1024;
    c.lr = 1e-5;
    c.steps = phase == Phase::Base ? 60000 : 10000;
  } else {
    c.d_emb = 32;
    c.hidden = 64;
    c.lr = phase == Phase::Base ? 5e-3 : 1e-3;
    c.steps = phase == Phase::Base ? 2000 : 500;
  }
  return c;
}

TrainConfig loss_comparison_config() {
  TrainConfig c = preset_config(Preset::Paper, Phase::Base);
  c.lr = 1e-3;
  c.lr_decay = LrDecay{0.1, 100000};
  c.steps = 200000;
  return c;
}

json to_json(const TrainConfig& c) {
  json j;
  j["lr"] = c.lr;
  if (c.lr_decay)
    j["lr_decay"] = {{"factor", c.lr_decay->factor}, {"every_steps", c.lr_decay->every_steps}};
  else
    j["lr_decay"] = nullptr;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["clip_norm"] = c.clip_norm;
  j["seed"] = c.seed;
  j["sequence_unit"] = to_string(c.sequence_unit);
  j["loss_mode"] = to_string(c.loss_mode);
  j["d_emb"] = c.d_emb;
  j["hidden"] = c.hidden;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) invalid("train config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "lr_decay") {
        if (value.is_null()) {
          c.lr_decay.reset();
        } else {
          for (const auto& [k, v] : value.items())
            if (k != "factor" && k != "every_steps") invalid("unknown lr_decay key \"" + k + "\"");
          c.lr_decay = LrDecay{value.at("factor").get<double>(), value.at("every_steps").get<std::size_t>()};
        }
      }
      else if (key == "steps") c.steps = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "sequence_unit") c.sequence_unit = parse_sequence_unit(value.get<std::string>());
      else if (key == "loss_mode") c.loss_mode = parse_loss_mode(value.get<std::string>());
      else if (key == "d_emb") c.d_emb = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else invalid("unknown train config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    invalid(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Selections

SentenceSelection all_sentences(const AnnotatedCorpus& corpus) {
  SentenceSelection out;
  for (const auto& [id, sentences] : corpus.speakers)
    for (std::size_t i = 0; i < sentences.size(); ++i) out.push_back({id, i});
  return out;
}

SentenceSelection speaker_sentences(const AnnotatedCorpus& corpus, std::span<const std::string> speakers) {
  SentenceSelection out;
  for (const auto& id : speakers) {
    const auto n = corpus.sentences_of(id).size();
    for (std::size_t i = 0; i < n; ++i) out.push_back({id, i});
  }
  return out;
}

std::vector<std::size_t> class_counts(const AnnotatedCorpus& corpus, const SentenceSelection& selection) {
  std::vector<std::size_t> counts(corpus.vocabulary.class_count(), 0);
  for (const auto& key : selection)
    for (FpTag t : corpus.sentences_of(key.speaker).at(key.index).fp_tags) ++counts[t.cls];
  return counts;
}

// ---------------------------------------------------------------------------
// Training

Checkpoint train_base(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const TrainConfig& config,
                      const TrainOptions& options) {
  config.validate();
  if (selection.empty()) invalid("training split is empty");

  Hyper hyper{config.d_emb, config.hidden, corpus.vocabulary.class_count(), config.seed, config.sequence_unit};
  EmbeddingProvider provider;
  if (options.precomputed) {
    hyper.d_emb = options.precomputed->dim();
    provider = PrecomputedSource{options.precomputed, options.precomputed_path};
  } else {
    // The token table covers the training sentences only; anything else is OOV.
    AnnotatedCorpus seen{corpus.vocabulary, {}};
    for (const auto& key : selection) seen.speakers[key.speaker].push_back(corpus.sentences_of(key.speaker).at(key.index));
    provider = TrainableLookup{TokenTable::from_corpus(seen)};
  }

  Checkpoint ckpt;
  ckpt.vocabulary = corpus.vocabulary;
  ckpt.config = config;
  ckpt.config.d_emb = hyper.d_emb;
  ckpt.model = init_model(hyper, std::move(provider));
  if (config.loss_mode == LossMode::Weighted) {
    const auto counts = class_counts(corpus, selection);
    ckpt.model.class_weights = class_weights_from_counts(counts);
  }

  const auto units = make_units(corpus, selection, config.sequence_unit);
  const auto validation = make_units(corpus, options.validation, config.sequence_unit);
  run_training(ckpt.model, units, validation, config, options);
  ckpt.steps_completed = config.steps;
  ckpt.id = compute_checkpoint_id(ckpt);
  return ckpt;
}

Checkpoint train_base(const AnnotatedCorpus& corpus, const TrainConfig& config, const TrainOptions& options) {
  return train_base(corpus, all_sentences(corpus), config, options);
}

Checkpoint finetune(const Checkpoint& base, const AnnotatedCorpus& corpus, const SentenceSelection& selection,
                    const TrainConfig& config, const TrainOptions& options) {
  config.validate(/*allow_zero_steps=*/true);
  if (corpus.vocabulary != base.vocabulary) invalid("fine-tuning corpus vocabulary does not match the base checkpoint");
  if (selection.empty()) invalid("fine-tuning split is empty");

  Checkpoint ckpt;
  ckpt.vocabulary = base.vocabulary;
  ckpt.parent_id = base.id;
  ckpt.config = config;
  ckpt.config.d_emb = base.model.hyper.d_emb;
  ckpt.config.hidden = base.model.hyper.hidden;
  ckpt.config.sequence_unit = base.model.hyper.sequence_unit;
  ckpt.model = base.model;
  if (options.precomputed) {
    if (ckpt.model.uses_lookup()) invalid("cannot switch a lookup-embedding checkpoint to precomputed vectors");
    if (options.precomputed->dim() != ckpt.model.hyper.d_emb) invalid("precomputed embedding dimension does not match the base");
    ckpt.model.embedding = PrecomputedSource{options.precomputed, options.precomputed_path};
  }
  ckpt.model.class_weights = config.loss_mode == LossMode::Weighted
                                 ? class_weights_from_counts(class_counts(corpus, selection))
                                 : ClassWeights::uniform(ckpt.vocabulary.class_count());

  const auto unit = ckpt.model.hyper.sequence_unit;
  run_training(ckpt.model, make_units(corpus, selection, unit), make_units(corpus, options.validation, unit), config, options);
  ckpt.steps_completed = base.steps_completed + config.steps;
  ckpt.id = compute_checkpoint_id(ckpt);
  return ckpt;
}

Checkpoint finetune(const Checkpoint& base, const AnnotatedCorpus& corpus, const TrainConfig& config,
                    const TrainOptions& options) {
  return finetune(base, corpus, all_sentences(corpus), config, options);
}

double evaluate_loss(const TaggerModel& model, const AnnotatedCorpus& corpus, const SentenceSelection& selection) {
  return mean_loss(model, make_units(corpus, selection, model.hyper.sequence_unit));
}

// ---------------------------------------------------------------------------
// Cross-validation plans

std::string_view to_string(CvMode mode) { return mode == CvMode::SpeakerOpen ? "open" : "close"; }

CvMode parse_cv_mode(std::string_view name) {
  if (name == "open" || name == "speaker_open") return CvMode::SpeakerOpen;
  if (name == "close" || name == "speaker_close") return CvMode::SpeakerClose;
  invalid("mode must be \"open\" or \"close\", got \"" + std::string(name) + "\"");
}

CvPlan make_cv_plan(std::vector<std::string> speaker_ids, std::size_t k, CvMode mode, double ratio, std::uint64_t seed) {
  if (k < 2 || k > speaker_ids.size())
    invalid("fold count " + std::to_string(k) + " must lie in [2, " + std::to_string(speaker_ids.size()) + "]");
  if (!(ratio > 0.0)) invalid("train/validation ratio must be positive");
  std::sort(speaker_ids.begin(), speaker_ids.end());
  if (std::adjacent_find(speaker_ids.begin(), speaker_ids.end()) != speaker_ids.end()) invalid("duplicate speaker id");
  std::mt19937_64 rng(seed);
  std::shuffle(speaker_ids.begin(), speaker_ids.end(), rng);

  CvPlan plan{std::vector<std::vector<std::string>>(k), mode, ratio, seed};
  for (std::size_t i = 0; i < speaker_ids.size(); ++i) plan.folds[i % k].push_back(speaker_ids[i]);
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

CvFold fold_split(const CvPlan& plan, const AnnotatedCorpus& corpus, std::size_t index) {
  if (index >= plan.folds.size()) invalid("fold index out of range");
  CvFold out;
  out.open_eval = speaker_sentences(corpus, plan.folds[index]);
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    if (f == index) continue;
    for (const auto& id : plan.folds[f]) {
      const std::size_t n = corpus.sentences_of(id).size();
      std::vector<bool> held(n, false);
      if (plan.mode == CvMode::SpeakerClose && n >= 2) {
        // Per-speaker split, identical in every fold that trains on this speaker.
        std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) / (plan.ratio + 1.0)));
        n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(plan.seed ^ fnv1a(id));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < n_val; ++i) held[order[i]] = true;
      }
      for (std::size_t i = 0; i < n; ++i) (held[i] ? out.close_eval : out.train).push_back({id, i});
    }
  }
  return out;
}

json to_json(const CvPlan& plan) {
  return {{"folds", plan.folds}, {"mode", to_string(plan.mode)}, {"ratio", plan.ratio}, {"seed", plan.seed}};
}

CvPlan cv_plan_from_json(const json& j) {
  try {
    CvPlan plan{j.at("folds").get<std::vector<std::vector<std::string>>>(), parse_cv_mode(j.at("mode").get<std::string>()),
                j.at("ratio").get<double>(), j.at("seed").get<std::uint64_t>()};
    if (plan.folds.size() < 2) invalid("a CV plan needs at least 2 folds");
    return plan;
  } catch (const json::exception& e) {
    invalid(std::string("cv plan: ") + e.what());
  }
}

std::string compute_checkpoint_id(const Checkpoint& ckpt) {
  Checkpoint copy = ckpt;
  copy.id.clear();
  const std::string bytes = serialize_checkpoint(copy);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

}  // namespace fpp
