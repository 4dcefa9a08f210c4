// fpp command-line tool. Parses flags, forwards to the C API workflow runner,
// prints the summary to stdout and logs to stderr.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or configuration.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpp/fpp.h"

namespace {

using json = nlohmann::json;

struct Global {
  std::string config;
  std::string out = "fpp-out";
  std::optional<unsigned long long> seed;
  std::string preset = "desk";
  std::string log_level = "info";
};

/// Training-config overrides shared by train and finetune.
struct Overrides {
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<double> clip_norm;
  std::optional<std::string> loss_mode;
  std::optional<std::string> sequence_unit;

  void attach(CLI::App* cmd) {
    cmd->add_option("--steps", steps, "Optimizer steps");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--batch-size", batch_size, "Sentences per batch");
    cmd->add_option("--clip-norm", clip_norm, "Global gradient-norm clip");
    cmd->add_option("--loss-mode", loss_mode, "equal or weighted")->check(CLI::IsMember({"equal", "weighted"}));
    cmd->add_option("--sequence-unit", sequence_unit, "sentence or breath_group")
        ->check(CLI::IsMember({"sentence", "breath_group"}));
  }

  json to_json() const {
    json j = json::object();
    if (steps) j["steps"] = *steps;
    if (lr) j["lr"] = *lr;
    if (batch_size) j["batch_size"] = *batch_size;
    if (clip_norm) j["clip_norm"] = *clip_norm;
    if (loss_mode) j["loss_mode"] = *loss_mode;
    if (sequence_unit) j["sequence_unit"] = *sequence_unit;
    return j;
  }
};

void log_to_stderr(fpp_log_level level, const char* message, void*) {
  std::fprintf(stderr, "[%s] %s\n", level == FPP_LOG_DEBUG ? "debug" : "info", message);
}

int exit_code(fpp_status status) {
  switch (status) {
    case FPP_OK:
      return 0;
    case FPP_ERR_INVALID:
      return 2;
    default:
      return 1;
  }
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

void put(json& j, const char* key, const std::string& value) {
  if (!value.empty()) j[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filled-pause prediction: corpus tools, speaker clustering, tagger training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fpp_version());

  Global g;
  app.add_option("--config", g.config, "TOML training config")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--preset", g.preset, "Training preset")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  app.add_option("--log-level", g.log_level, "quiet, info or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();

  json opts = json::object();

  std::string input;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and write its canonical form");
  ingest->add_option("input", input, "Annotated corpus (JSON lines)")->required();

  std::optional<double> vocab_threshold;
  auto* vocab = app.add_subcommand("vocab", "Select the FP vocabulary by speaker coverage");
  vocab->add_option("input", input, "Annotated corpus")->required();
  vocab->add_option("--threshold", vocab_threshold, "Minimum fraction of speakers using a word (default 0.2)");

  std::optional<std::string> feature;
  std::optional<double> cut;
  auto* cluster = app.add_subcommand("cluster", "Group speakers by FP usage (Ward linkage)");
  cluster->add_option("input", input, "Annotated corpus")->required();
  cluster->add_option("--feature", feature, "word or position")->check(CLI::IsMember({"word", "position"}));
  cluster->add_option("--threshold", cut, "Cut distance (default 1.0 word, 1.7 position)");

  std::optional<std::size_t> cv;
  std::optional<std::string> mode;
  std::optional<double> ratio;
  std::optional<std::string> embeddings;
  Overrides train_overrides, finetune_overrides;
  auto* train = app.add_subcommand("train", "Train the non-personalized tagger");
  train->add_option("input", input, "Annotated corpus")->required();
  train->add_option("--cv", cv, "Number of speaker folds (0 trains once on everything)");
  train->add_option("--mode", mode, "open or close")->check(CLI::IsMember({"open", "close"}));
  train->add_option("--ratio", ratio, "Train:validation ratio per speaker in close mode (default 9)");
  train->add_option("--embeddings", embeddings, "Precomputed embedding file")->check(CLI::ExistingFile);
  train_overrides.attach(train);

  std::string base;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint on a sub-corpus");
  finetune->add_option("input", input, "Annotated sub-corpus")->required();
  finetune->add_option("--base", base, "Parent checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--embeddings", embeddings, "Precomputed embedding file")->check(CLI::ExistingFile);
  finetune_overrides.attach(finetune);

  std::string checkpoint;
  std::optional<std::string> plan;
  std::optional<std::size_t> fold;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("input", input, "Annotated corpus")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--plan", plan, "CV plan written by train --cv")->check(CLI::ExistingFile);
  eval->add_option("--fold", fold, "Fold index within the plan");
  eval->add_option("--mode", mode, "open or close")->check(CLI::IsMember({"open", "close"}));
  eval->add_option("--embeddings", embeddings, "Precomputed embedding file")->check(CLI::ExistingFile);

  std::optional<std::string> groups, profile, speaker;
  auto* predict = app.add_subcommand("predict", "Insert predicted FPs into fluent text");
  predict->add_option("input", input, "Untagged sentences (JSON lines)")->required();
  predict->add_option("--checkpoint", checkpoint,
                      "Checkpoint file, or with --profile a directory holding <group>.ckpt files")
      ->required();
  predict->add_option("--groups", groups, "Group assignment written by cluster")->check(CLI::ExistingFile);
  predict->add_option("--profile", profile, "Target speaker profile (JSON)")->check(CLI::ExistingFile);
  predict->add_option("--speaker", speaker, "Speaker to pick from a multi-speaker profile file");
  predict->add_option("--embeddings", embeddings, "Precomputed embedding file")->check(CLI::ExistingFile);

  std::string spec;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  synth->add_option("spec", spec, "Synthesis spec (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  opts["out"] = g.out;
  opts["preset"] = g.preset;
  opts["log_level"] = g.log_level;
  put(opts, "config", g.config);
  put(opts, "seed", g.seed);

  if (cmd == ingest) {
    opts["input"] = input;
  } else if (cmd == vocab) {
    opts["input"] = input;
    put(opts, "threshold", vocab_threshold);
  } else if (cmd == cluster) {
    opts["input"] = input;
    put(opts, "feature", feature);
    put(opts, "threshold", cut);
  } else if (cmd == train) {
    opts["input"] = input;
    put(opts, "cv", cv);
    put(opts, "mode", mode);
    put(opts, "ratio", ratio);
    put(opts, "embeddings", embeddings);
    if (auto o = train_overrides.to_json(); !o.empty()) opts["overrides"] = o;
  } else if (cmd == finetune) {
    opts["input"] = input;
    opts["base"] = base;
    put(opts, "embeddings", embeddings);
    if (auto o = finetune_overrides.to_json(); !o.empty()) opts["overrides"] = o;
  } else if (cmd == eval) {
    opts["input"] = input;
    opts["checkpoint"] = checkpoint;
    put(opts, "plan", plan);
    put(opts, "fold", fold);
    put(opts, "mode", mode);
    put(opts, "embeddings", embeddings);
  } else if (cmd == predict) {
    opts["input"] = input;
    opts["checkpoint"] = checkpoint;
    put(opts, "groups", groups);
    put(opts, "profile", profile);
    put(opts, "speaker", speaker);
    put(opts, "embeddings", embeddings);
  } else if (cmd == synth) {
    opts["spec"] = spec;
  }

  char* result = nullptr;
  const fpp_status status = fpp_run(cmd->get_name().c_str(), opts.dump().c_str(), log_to_stderr, nullptr, &result);
  if (status != FPP_OK) {
    std::fprintf(stderr, "fpp %s: error: %s\n", cmd->get_name().c_str(), fpp_last_error());
    return exit_code(status);
  }

  json summary = json::parse(result);
  fpp_string_free(result);
  if (summary.contains("table")) {
    std::cout << summary["table"].get<std::string>();
    summary.erase("table");
  }
  if (g.log_level != "quiet") std::cout << summary.dump(2) << '\n';
  return 0;
}
