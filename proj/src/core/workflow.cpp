#include "core/workflow.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "core/config.hpp"
#include "core/error.hpp"
#include "core/profile.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

namespace fpp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string_view> kCommonKeys = {"out", "config", "seed", "preset", "log_level", "overrides"};

template <typename T>
T required(const json& j, const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) invalid("missing required option \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid("option \"" + key + "\" has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_opt(const json& j, const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return required<T>(j, key);
}

LogLevel parse_log_level(std::string_view s) {
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  invalid("unknown log level \"" + std::string(s) + "\" (expected quiet, info or debug)");
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }
void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    invalid(path.string() + ": " + e.what());
  }
}

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

class Context {
 public:
  Context(std::string_view command, const json& options, const LogSink& sink, std::vector<std::string_view> command_keys)
      : command_(command), options_(options), sink_(sink) {
    if (!options.is_object()) invalid("options must be a JSON object");
    for (const auto& [key, value] : options.items()) {
      const bool known = std::find(kCommonKeys.begin(), kCommonKeys.end(), key) != kCommonKeys.end() ||
                         std::find(command_keys.begin(), command_keys.end(), key) != command_keys.end();
      if (!known) invalid("unknown option \"" + key + "\" for command " + std::string(command));
    }
    out_ = required<std::string>(options, "out");
    level_ = parse_log_level(optional_opt<std::string>(options, "log_level").value_or("info"));
    preset_ = parse_preset(optional_opt<std::string>(options, "preset").value_or("desk"));
    seed_ = optional_opt<std::uint64_t>(options, "seed");
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory " + out_.string() + ": " + ec.message());
  }

  const json& options() const { return options_; }
  const fs::path& out() const { return out_; }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed_.value_or(fallback); }

  void info(std::string_view msg) const { emit(LogLevel::Info, msg); }
  void debug(std::string_view msg) const { emit(LogLevel::Debug, msg); }

  TrainConfig resolve_config(Phase phase) {
    TrainConfig c = preset_config(preset_, phase);
    if (auto path = optional_opt<std::string>(options_, "config")) c = load_train_config(*path, c);
    if (options_.contains("overrides")) c = train_config_from_json(options_.at("overrides"), c);
    if (seed_) c.seed = *seed_;
    c.validate(phase == Phase::Finetune);
    train_config_ = c;
    return c;
  }

  /// Everything that determined this run, minus the output location.
  void write_snapshot(json extra = json::object()) const {
    json snap;
    snap["command"] = command_;
    json opts = options_;
    opts.erase("out");
    opts.erase("log_level");
    snap["options"] = opts;
    if (train_config_) snap["train_config"] = to_json(*train_config_);
    for (auto& [k, v] : extra.items()) snap[k] = v;
    write_json(out_ / kSnapshotFile, snap);
  }

 private:
  void emit(LogLevel level, std::string_view msg) const {
    if (!sink_ || level_ == LogLevel::Quiet) return;
    if (level == LogLevel::Debug && level_ != LogLevel::Debug) return;
    sink_(level, msg);
  }

  std::string command_;
  json options_;
  const LogSink& sink_;
  fs::path out_;
  LogLevel level_ = LogLevel::Info;
  Preset preset_ = Preset::Desk;
  std::optional<std::uint64_t> seed_;
  std::optional<TrainConfig> train_config_;
};

json corpus_summary(const AnnotatedCorpus& corpus) {
  const auto slots = corpus.slot_count();
  const auto fps = corpus.fp_count();
  return {{"speakers", corpus.speakers.size()},
          {"sentences", corpus.sentence_count()},
          {"slots", slots},
          {"fps", fps},
          {"fp_rate", slots == 0 ? 0.0 : static_cast<double>(fps) / static_cast<double>(slots)}};
}

std::string summary_line(const json& s) {
  return std::to_string(s["speakers"].get<std::size_t>()) + " speakers, " + std::to_string(s["sentences"].get<std::size_t>()) +
         " sentences, " + std::to_string(s["slots"].get<std::size_t>()) + " slots, FP rate " +
         fmt("%.4f", s["fp_rate"].get<double>());
}

std::shared_ptr<const PrecomputedEmbeddings> load_embeddings(const json& options) {
  auto path = optional_opt<std::string>(options, "embeddings");
  if (!path) return nullptr;
  return std::make_shared<const PrecomputedEmbeddings>(PrecomputedEmbeddings::load(*path));
}

TrainOptions train_options(const Context& ctx, std::vector<std::string>& log_lines) {
  TrainOptions opts;
  if (auto path = optional_opt<std::string>(ctx.options(), "embeddings")) {
    opts.precomputed = load_embeddings(ctx.options());
    opts.precomputed_path = *path;
  }
  opts.progress = [&ctx, &log_lines](const TrainProgress& p) {
    json line{{"step", p.step}, {"loss", p.loss}, {"lr", p.lr}, {"grad_norm", p.grad_norm}};
    std::string msg = "step " + std::to_string(p.step) + " loss " + fmt("%.6f", p.loss) + " lr " + fmt("%.3g", p.lr);
    if (p.validation_loss) {
      line["validation_loss"] = *p.validation_loss;
      msg += " val " + fmt("%.6f", *p.validation_loss);
    }
    log_lines.push_back(line.dump());
    ctx.info(msg);
  };
  return opts;
}

void write_train_log(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

/// Predicts every selected sentence once and serves the results from memory.
Predictor cached_predictor(const TaggerModel& model, const AnnotatedCorpus& corpus, const SentenceSelection& selection) {
  auto cache = std::make_shared<std::map<SentenceKey, std::vector<FpTag>>>();
  for (const auto& key : selection) {
    const auto& s = corpus.sentences_of(key.speaker).at(key.index);
    (*cache)[key] = predict_tags(model, s, key);
  }
  return [cache](const Sentence&, const SentenceKey& key) { return cache->at(key); };
}

/// report.json, per_fp.csv, per_speaker_position.csv, per_speaker_word.csv.
MetricsReport write_reports(const fs::path& dir, const Checkpoint& ckpt, const AnnotatedCorpus& corpus,
                            const SentenceSelection& selection) {
  if (ckpt.vocabulary != corpus.vocabulary) invalid("checkpoint vocabulary does not match the evaluation corpus");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string());

  const auto predict = cached_predictor(ckpt.model, corpus, selection);
  const auto report = evaluate(corpus, selection, predict);
  const auto speakers = per_speaker_distribution(corpus, selection, predict);
  auto j = to_json(report);
  j["checkpoint"] = ckpt.id;
  write_json(dir / "report.json", j);
  const auto breakdown = per_fp_breakdown(report);
  write_text(dir / "per_fp.csv", breakdown_csv(breakdown));
  write_text(dir / "per_speaker_position.csv", speaker_csv(speakers, false));
  write_text(dir / "per_speaker_word.csv", speaker_csv(speakers, true));
  return report;
}

json headline(const MetricsReport& r) {
  return {{"position_f", r.position.f}, {"word_weighted_f", r.word_weighted.f}, {"no_gold_fps", r.no_gold_fps}};
}

// ---------------------------------------------------------------------------

json cmd_ingest(Context& ctx) {
  const auto input = required<std::string>(ctx.options(), "input");
  ctx.write_snapshot();
  const auto corpus = parse_corpus(input);
  const auto target = ctx.out() / "corpus.jsonl";
  write_corpus(corpus, target);
  auto summary = corpus_summary(corpus);
  ctx.info("ingested " + summary_line(summary));
  summary["output"] = target.string();
  return summary;
}

json cmd_vocab(Context& ctx) {
  const auto input = required<std::string>(ctx.options(), "input");
  const double threshold = optional_opt<double>(ctx.options(), "threshold").value_or(0.20);
  ctx.write_snapshot();
  const auto corpus = parse_corpus(input);
  const auto vocab = build_fp_vocabulary(corpus, threshold);
  const auto restricted = restrict_vocabulary(corpus, vocab);
  write_corpus(restricted, ctx.out() / "corpus.jsonl");

  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  const auto per_class = class_counts(restricted, all_sentences(restricted));
  for (std::size_t w = 0; w < vocab.size(); ++w) counts[vocab.words()[w]] = per_class[w + 1];
  nlohmann::ordered_json v{{"fp_vocabulary", vocab.words()}, {"threshold", threshold}, {"counts", counts}};
  write_json(ctx.out() / "vocabulary.json", v);
  ctx.info("kept " + std::to_string(vocab.size()) + " of " + std::to_string(corpus.vocabulary.size()) + " FP words");
  return {{"fp_vocabulary", vocab.words()}, {"dropped_fps", corpus.fp_count() - restricted.fp_count()}};
}

json cmd_cluster(Context& ctx) {
  const auto input = required<std::string>(ctx.options(), "input");
  const auto feature = parse_profile_feature(optional_opt<std::string>(ctx.options(), "feature").value_or("word"));
  const double threshold = optional_opt<double>(ctx.options(), "threshold").value_or(default_cut_threshold(feature));
  ctx.write_snapshot({{"resolved_threshold", threshold}});
  const auto corpus = parse_corpus(input);
  const auto assignment = cluster_speakers(corpus, feature, threshold);

  auto groups = to_json(assignment);
  groups["fp_vocabulary"] = corpus.vocabulary.words();
  write_json(ctx.out() / "groups.json", groups);

  nlohmann::ordered_json profiles = nlohmann::ordered_json::object();
  for (const auto& id : corpus.speaker_ids()) {
    const auto p = speaker_profile(corpus, id);
    profiles[id] = {{"word", p.word_rates}, {"position", p.position_rates}};
  }
  write_json(ctx.out() / "profiles.json",
             nlohmann::ordered_json{{"fp_vocabulary", corpus.vocabulary.words()}, {"speakers", profiles}});

  json summary = json::array();
  std::size_t total = 0;
  for (std::size_t g = 0; g < assignment.group_count(); ++g) {
    const auto name = GroupAssignment::group_name(g);
    const auto sub = select_speakers(corpus, assignment.groups[g]);
    write_corpus(sub, ctx.out() / (name + ".jsonl"));
    total += sub.sentence_count();
    summary.push_back({{"group", name}, {"speakers", assignment.groups[g]}, {"sentences", sub.sentence_count()}});
    ctx.info(name + ": " + std::to_string(assignment.groups[g].size()) + " speakers, " + std::to_string(sub.sentence_count()) +
             " sentences");
  }
  if (total != corpus.sentence_count()) fail(ErrorKind::Runtime, "group corpora do not partition the input");
  return {{"feature", to_string(feature)}, {"threshold", threshold}, {"groups", summary}};
}

json cmd_train(Context& ctx) {
  const auto input = required<std::string>(ctx.options(), "input");
  const auto folds = optional_opt<std::size_t>(ctx.options(), "cv").value_or(0);
  const auto mode = parse_cv_mode(optional_opt<std::string>(ctx.options(), "mode").value_or("open"));
  const double ratio = optional_opt<double>(ctx.options(), "ratio").value_or(9.0);
  const auto config = ctx.resolve_config(Phase::Base);
  ctx.write_snapshot();
  const auto corpus = parse_corpus(input);
  ctx.info("training on " + summary_line(corpus_summary(corpus)));

  if (folds == 0) {
    std::vector<std::string> log_lines;
    auto opts = train_options(ctx, log_lines);
    const auto ckpt = train_base(corpus, config, opts);
    save_checkpoint(ckpt, ctx.out() / "model.ckpt");
    write_train_log(ctx.out() / "train_log.jsonl", log_lines);
    const auto report = write_reports(ctx.out(), ckpt, corpus, all_sentences(corpus));
    json result = headline(report);
    result["checkpoint"] = ckpt.id;
    result["table"] = format_report(report, "training-set evaluation");
    return result;
  }

  const auto plan = make_cv_plan(corpus.speaker_ids(), folds, mode, ratio, config.seed);
  write_json(ctx.out() / "plan.json", to_json(plan));
  std::vector<MetricsReport> open_reports, close_reports;
  json fold_ids = json::array();
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto split = fold_split(plan, corpus, f);
    const auto dir = ctx.out() / ("fold_" + std::to_string(f));
    fs::create_directories(dir);
    ctx.info("fold " + std::to_string(f) + ": " + std::to_string(split.train.size()) + " training sentences");
    std::vector<std::string> log_lines;
    auto opts = train_options(ctx, log_lines);
    opts.validation = split.close_eval;
    const auto ckpt = train_base(corpus, split.train, config, opts);
    save_checkpoint(ckpt, dir / "model.ckpt");
    write_train_log(dir / "train_log.jsonl", log_lines);
    fold_ids.push_back(ckpt.id);
    open_reports.push_back(write_reports(dir / "open", ckpt, corpus, split.open_eval));
    if (mode == CvMode::SpeakerClose) close_reports.push_back(write_reports(dir / "close", ckpt, corpus, split.close_eval));
  }

  json result{{"folds", fold_ids}};
  std::string table;
  auto summarize = [&](const char* name, std::vector<MetricsReport> reports) {
    const auto cv = aggregate_folds(std::move(reports));
    write_json(ctx.out() / (std::string("cv_") + name + ".json"), to_json(cv));
    result[name] = headline(cv.mean);
    table += format_report(cv.mean, std::string("speaker-") + name + " mean over folds");
  };
  summarize("open", std::move(open_reports));
  if (mode == CvMode::SpeakerClose) summarize("close", std::move(close_reports));
  result["table"] = table;
  return result;
}

json cmd_finetune(Context& ctx) {
  const auto base_path = required<std::string>(ctx.options(), "base");
  const auto input = required<std::string>(ctx.options(), "input");
  const auto config = ctx.resolve_config(Phase::Finetune);
  ctx.write_snapshot();
  const auto corpus = parse_corpus(input);
  const auto base = load_checkpoint(base_path, load_embeddings(ctx.options()));
  ctx.info("fine-tuning " + base.id + " on " + summary_line(corpus_summary(corpus)));

  std::vector<std::string> log_lines;
  auto opts = train_options(ctx, log_lines);
  const auto ckpt = finetune(base, corpus, config, opts);
  save_checkpoint(ckpt, ctx.out() / "model.ckpt");
  write_train_log(ctx.out() / "train_log.jsonl", log_lines);
  const auto report = write_reports(ctx.out(), ckpt, corpus, all_sentences(corpus));
  json result = headline(report);
  result["checkpoint"] = ckpt.id;
  result["parent"] = base.id;
  result["table"] = format_report(report, "fine-tuning-set evaluation");
  return result;
}

json cmd_eval(Context& ctx) {
  const auto ckpt_path = required<std::string>(ctx.options(), "checkpoint");
  const auto input = required<std::string>(ctx.options(), "input");
  const auto plan_path = optional_opt<std::string>(ctx.options(), "plan");
  const auto fold = optional_opt<std::size_t>(ctx.options(), "fold");
  const auto mode_name = optional_opt<std::string>(ctx.options(), "mode");
  if (!plan_path && (fold || mode_name)) invalid("--fold and --mode need --plan");
  if (plan_path && !fold) invalid("--plan needs --fold");
  ctx.write_snapshot();

  const auto corpus = parse_corpus(input);
  const auto ckpt = load_checkpoint(ckpt_path, load_embeddings(ctx.options()));
  SentenceSelection selection = all_sentences(corpus);
  std::string title = "evaluation on all sentences";
  if (plan_path) {
    const auto plan = cv_plan_from_json(read_json_file(*plan_path));
    const auto mode = parse_cv_mode(mode_name.value_or("open"));
    if (mode == CvMode::SpeakerClose && plan.mode != CvMode::SpeakerClose)
      invalid("speaker-close evaluation needs a plan made in close mode");
    const auto split = fold_split(plan, corpus, *fold);
    selection = mode == CvMode::SpeakerOpen ? split.open_eval : split.close_eval;
    title = "fold " + std::to_string(*fold) + ", speaker-" + std::string(to_string(mode));
  }
  const auto report = write_reports(ctx.out(), ckpt, corpus, selection);
  json result = headline(report);
  result["checkpoint"] = ckpt.id;
  result["sentences"] = selection.size();
  result["table"] = format_report(report, title);
  return result;
}

FeatureVector read_profile(const fs::path& path, const std::optional<std::string>& speaker, ProfileFeature feature,
                           const FpVocabulary& vocabulary) {
  const auto j = read_json_file(path);
  try {
    if (j.contains("fp_vocabulary") && FpVocabulary(j.at("fp_vocabulary").get<std::vector<std::string>>()) != vocabulary)
      invalid("profile vocabulary does not match the group assignment");
    const json* entry = &j;
    if (j.contains("speakers")) {
      if (!speaker) invalid("profile file lists several speakers; pass --speaker");
      if (!j.at("speakers").contains(*speaker)) invalid("speaker \"" + *speaker + "\" not found in profile file");
      entry = &j.at("speakers").at(*speaker);
    }
    return entry->at(std::string(to_string(feature))).get<FeatureVector>();
  } catch (const json::exception& e) {
    invalid(path.string() + ": " + e.what());
  }
}

json cmd_predict(Context& ctx) {
  const auto ckpt_arg = required<std::string>(ctx.options(), "checkpoint");
  const auto input = required<std::string>(ctx.options(), "input");
  const auto groups_path = optional_opt<std::string>(ctx.options(), "groups");
  const auto profile_path = optional_opt<std::string>(ctx.options(), "profile");
  const auto speaker = optional_opt<std::string>(ctx.options(), "speaker");
  if (profile_path && !groups_path) invalid("--profile needs --groups");
  ctx.write_snapshot();

  fs::path ckpt_path = ckpt_arg;
  json result = json::object();
  std::optional<FpVocabulary> expected_vocab;
  if (profile_path) {
    const auto gj = read_json_file(*groups_path);
    const auto assignment = group_assignment_from_json(gj);
    FpVocabulary vocab = FpVocabulary::standard();
    if (gj.contains("fp_vocabulary")) vocab = FpVocabulary(gj.at("fp_vocabulary").get<std::vector<std::string>>());
    const auto profile = read_profile(*profile_path, speaker, assignment.feature, vocab);
    const auto g = assign_group(assignment, profile);
    const auto name = GroupAssignment::group_name(g);
    ckpt_path = fs::path(ckpt_arg) / (name + ".ckpt");
    if (!fs::is_regular_file(ckpt_path)) invalid("missing group checkpoint " + ckpt_path.string());
    ctx.info("profile is nearest to group " + name + "; using " + ckpt_path.string());
    result["group"] = name;
    expected_vocab = vocab;
  }

  const auto ckpt = load_checkpoint(ckpt_path, load_embeddings(ctx.options()));
  if (expected_vocab && *expected_vocab != ckpt.vocabulary) invalid("group checkpoint vocabulary does not match the group assignment");

  std::ifstream in(input, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + input);
  const auto fluent = parse_fluent(in);

  std::string tagged, plain;
  std::map<std::string, std::size_t> next_index;
  std::size_t inserted = 0;
  for (const auto& f : fluent) {
    Sentence s{f.breath_groups, {}};
    s.fp_tags.assign(s.slot_count(), FpTag::none());
    const SentenceKey key{f.speaker, next_index[f.speaker]++};
    s.fp_tags = predict_tags(ckpt.model, s, key);

    nlohmann::ordered_json line;
    if (!f.speaker.empty()) line["speaker"] = f.speaker;
    line["breath_groups"] = s.breath_groups;
    nlohmann::ordered_json tags = nlohmann::ordered_json::array();
    for (FpTag t : s.fp_tags) {
      if (t.is_fp()) {
        tags.push_back(ckpt.vocabulary.word(t));
        ++inserted;
      } else {
        tags.push_back(nullptr);
      }
    }
    line["fp_tags"] = std::move(tags);
    tagged += line.dump() + "\n";
    plain += render_plain(s, ckpt.vocabulary) + "\n";
  }
  write_text(ctx.out() / "predicted.jsonl", tagged);
  write_text(ctx.out() / "predicted.txt", plain);
  ctx.info("predicted " + std::to_string(inserted) + " FPs over " + std::to_string(fluent.size()) + " sentences");
  result["checkpoint"] = ckpt.id;
  result["sentences"] = fluent.size();
  result["inserted_fps"] = inserted;
  return result;
}

json cmd_synth(Context& ctx) {
  const auto spec_path = required<std::string>(ctx.options(), "spec");
  const auto seed = ctx.seed_or(0);
  ctx.write_snapshot({{"resolved_seed", seed}});
  const auto spec = load_synth_spec(spec_path);
  const auto corpus = synth_corpus(spec, seed);
  write_corpus(corpus, ctx.out() / "corpus.jsonl");
  auto summary = corpus_summary(corpus);
  ctx.info("synthesized " + summary_line(summary));
  return summary;
}

struct CommandEntry {
  std::string name;
  std::vector<std::string_view> keys;
  json (*run)(Context&);
};

const std::vector<CommandEntry>& command_table() {
  static const std::vector<CommandEntry> table = {
      {"ingest", {"input"}, cmd_ingest},
      {"vocab", {"input", "threshold"}, cmd_vocab},
      {"cluster", {"input", "feature", "threshold"}, cmd_cluster},
      {"train", {"input", "cv", "mode", "ratio", "embeddings"}, cmd_train},
      {"finetune", {"base", "input", "embeddings"}, cmd_finetune},
      {"eval", {"checkpoint", "input", "plan", "fold", "mode", "embeddings"}, cmd_eval},
      {"predict", {"checkpoint", "input", "groups", "profile", "speaker", "embeddings"}, cmd_predict},
      {"synth", {"spec"}, cmd_synth},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& workflow_commands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& c : command_table()) out.push_back(c.name);
    return out;
  }();
  return names;
}

json run_workflow(std::string_view command, const json& options, const LogSink& log) {
  for (const auto& entry : command_table()) {
    if (entry.name != command) continue;
    Context ctx(command, options, log, entry.keys);
    return entry.run(ctx);
  }
  invalid("unknown command \"" + std::string(command) + "\"");
}

std::string render_plain(const Sentence& sentence, const FpVocabulary& vocabulary) {
  const auto morphemes = sentence.morphemes();
  if (sentence.fp_tags.size() != morphemes.size() + 1) invalid("tag/slot count mismatch");
  std::string out;
  auto append = [&out](std::string_view token) {
    if (!out.empty()) out.push_back(' ');
    out.append(token);
  };
  for (std::size_t i = 0; i <= morphemes.size(); ++i) {
    if (sentence.fp_tags[i].is_fp()) append(vocabulary.word(sentence.fp_tags[i]));
    if (i < morphemes.size()) append(morphemes[i]);
  }
  return out;
}

std::vector<FluentSentence> parse_fluent(std::istream& in) {
  std::vector<FluentSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      invalid(where + "not valid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) invalid(where + "expected a JSON object");
    FluentSentence s;
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "speaker") s.speaker = value.get<std::string>();
        else if (key == "breath_groups") s.breath_groups = value.get<std::vector<std::vector<std::string>>>();
        else if (key == "fp_tags") invalid(where + "fluent input must not carry fp_tags");
        else invalid(where + "unknown key \"" + key + "\"");
      }
    } catch (const json::exception& e) {
      invalid(where + e.what());
    }
    if (!j.contains("breath_groups")) invalid(where + "missing breath_groups");
    if (s.breath_groups.empty()) invalid(where + "sentence has no breath groups");
    for (const auto& bg : s.breath_groups) {
      if (bg.empty()) invalid(where + "empty breath group");
      for (const auto& m : bg) {
        try {
          validate_morpheme(m);
        } catch (const Error& e) {
          invalid(where + e.what());
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fpp
