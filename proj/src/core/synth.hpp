#pragma once

// Synthetic corpus generator for desk-scale experiments.
//
// Each archetype fixes an FP word distribution and a per-position insertion
// probability. Surfaces come from a small lexicon: neutral tokens "wNN" and
// cue tokens "cue_<word>_<j>". The morpheme right after an inserted FP is a
// cue of that word with probability `cue_strength`; any other morpheme is a
// cue of a uniformly chosen active word with probability `cue_noise`. That
// coupling gives a tagger something to learn while leaving the marginal word
// and position statistics equal to the archetype parameters.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/corpus.hpp"

namespace fpp {

struct Archetype {
  std::string name;
  std::size_t speakers = 1;
  std::size_t sentences_per_speaker = 10;
  /// Aligned with SynthSpec::vocabulary; sums to 1.
  std::vector<double> word_distribution;
  /// Insertion probability per PositionCategory, each in [0, 1].
  std::array<double, kPositionCategoryCount> insertion_probability{};
  /// P(length = 1), P(length = 2), ...; each sums to 1.
  std::vector<double> breath_groups_per_sentence{0.4, 0.4, 0.2};
  std::vector<double> morphemes_per_breath_group{0.0, 0.2, 0.3, 0.3, 0.2};
};

struct SynthSpec {
  FpVocabulary vocabulary = FpVocabulary::standard();
  std::size_t neutral_lexicon_size = 40;
  std::size_t cues_per_word = 2;
  double cue_strength = 0.8;
  double cue_noise = 0.02;
  std::vector<Archetype> archetypes;

  /// Throws InvalidInput on malformed probability vectors or counts.
  void validate() const;
};

/// JSON form: {"fp_vocabulary": [...]?, "neutral_lexicon_size", "cues_per_word",
/// "cue_strength", "cue_noise", "archetypes": [{"name", "speakers",
/// "sentences_per_speaker", "word_distribution": {"ee": 0.8, ...},
/// "insertion_probability": {"sentence_head": p, ...} or [p0, p1, p2, p3],
/// "breath_groups_per_sentence": [...], "morphemes_per_breath_group": [...]}]}
SynthSpec synth_spec_from_json(const nlohmann::json& spec);
SynthSpec load_synth_spec(const std::filesystem::path& path);

AnnotatedCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace fpp
