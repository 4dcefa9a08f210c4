#pragma once

// Command workflows behind the CLI. Each command takes a JSON options object
// and writes its artifacts plus a resolved-config snapshot into `out`.
//
// Common options:
//   out        output directory (required)
//   config     TOML training config overlaid on the preset
//   seed       overrides the config seed
//   preset     "desk" (default) or "paper"
//   log_level  "quiet", "info" (default) or "debug"
//   overrides  object of TrainConfig keys applied last

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core/corpus.hpp"
#include "core/eval.hpp"

namespace fpp {

enum class LogLevel { Quiet, Info, Debug };

using LogSink = std::function<void(LogLevel, std::string_view)>;

inline constexpr std::string_view kSnapshotFile = "resolved_config.json";

/// Command names accepted by run_workflow.
const std::vector<std::string>& workflow_commands();

/// Runs one command; returns a JSON summary of what was produced.
nlohmann::json run_workflow(std::string_view command, const nlohmann::json& options, const LogSink& log = {});

/// Space-joined morphemes with each predicted FP word placed before its slot's
/// morpheme (a sentence-end FP trails the sentence).
std::string render_plain(const Sentence& sentence, const FpVocabulary& vocabulary);

/// Reads untagged JSON lines: {"breath_groups": [[...]], "speaker"?: "..."}.
struct FluentSentence {
  std::string speaker;
  std::vector<std::vector<std::string>> breath_groups;
};
std::vector<FluentSentence> parse_fluent(std::istream& in);

}  // namespace fpp
