#include "core/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "core/error.hpp"

namespace fpp {

namespace {

using json = nlohmann::json;

void check_distribution(const std::vector<double>& p, const std::string& what) {
  if (p.empty()) invalid(what + ": empty probability vector");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) invalid(what + ": probabilities must be finite and non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) invalid(what + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
}

std::size_t draw(std::mt19937_64& rng, const std::vector<double>& p) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

std::string neutral_token(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%02zu", i);
  return buf;
}

std::string cue_token(const std::string& word, std::size_t j) { return "cue_" + word + "_" + std::to_string(j); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void SynthSpec::validate() const {
  if (archetypes.empty()) invalid("synth spec declares no archetypes");
  if (neutral_lexicon_size == 0) invalid("neutral_lexicon_size must be positive");
  if (cues_per_word == 0) invalid("cues_per_word must be positive");
  if (!(cue_strength >= 0.0 && cue_strength <= 1.0)) invalid("cue_strength must lie in [0, 1]");
  if (!(cue_noise >= 0.0 && cue_noise <= 1.0)) invalid("cue_noise must lie in [0, 1]");
  for (std::size_t i = 0; i < archetypes.size(); ++i) {
    const auto& a = archetypes[i];
    const std::string where = "archetype \"" + a.name + "\"";
    if (a.name.empty()) invalid("archetype name must be non-empty");
    validate_morpheme(a.name);
    for (std::size_t k = 0; k < i; ++k)
      if (archetypes[k].name == a.name) invalid(where + " declared twice");
    if (a.speakers == 0 || a.sentences_per_speaker == 0) invalid(where + ": speaker and sentence counts must be positive");
    if (a.word_distribution.size() != vocabulary.size())
      invalid(where + ": word distribution does not match the vocabulary size");
    check_distribution(a.word_distribution, where + " word_distribution");
    for (double p : a.insertion_probability)
      if (!(p >= 0.0 && p <= 1.0)) invalid(where + ": insertion probabilities must lie in [0, 1]");
    check_distribution(a.breath_groups_per_sentence, where + " breath_groups_per_sentence");
    check_distribution(a.morphemes_per_breath_group, where + " morphemes_per_breath_group");
  }
}

SynthSpec synth_spec_from_json(const json& j) {
  try {
    SynthSpec spec;
    if (j.contains("fp_vocabulary")) spec.vocabulary = FpVocabulary(j.at("fp_vocabulary").get<std::vector<std::string>>());
    spec.neutral_lexicon_size = get_or<std::size_t>(j, "neutral_lexicon_size", spec.neutral_lexicon_size);
    spec.cues_per_word = get_or<std::size_t>(j, "cues_per_word", spec.cues_per_word);
    spec.cue_strength = get_or<double>(j, "cue_strength", spec.cue_strength);
    spec.cue_noise = get_or<double>(j, "cue_noise", spec.cue_noise);

    for (const auto& ja : j.at("archetypes")) {
      Archetype a;
      a.name = ja.at("name").get<std::string>();
      a.speakers = get_or<std::size_t>(ja, "speakers", a.speakers);
      a.sentences_per_speaker = get_or<std::size_t>(ja, "sentences_per_speaker", a.sentences_per_speaker);

      a.word_distribution.assign(spec.vocabulary.size(), 0.0);
      for (const auto& [word, p] : ja.at("word_distribution").items()) {
        auto tag = spec.vocabulary.find(word);
        if (!tag) invalid("archetype \"" + a.name + "\": word \"" + word + "\" not in the vocabulary");
        a.word_distribution[tag->word_index()] = p.get<double>();
      }

      const auto& ins = ja.at("insertion_probability");
      if (ins.is_array()) {
        if (ins.size() != kPositionCategoryCount) invalid("insertion_probability needs 4 entries");
        for (std::size_t c = 0; c < kPositionCategoryCount; ++c) a.insertion_probability[c] = ins[c].get<double>();
      } else {
        for (std::size_t c = 0; c < kPositionCategoryCount; ++c) {
          const std::string key(to_string(static_cast<PositionCategory>(c)));
          a.insertion_probability[c] = get_or<double>(ins, key.c_str(), 0.0);
        }
        for (const auto& [key, value] : ins.items()) {
          bool known = false;
          for (std::size_t c = 0; c < kPositionCategoryCount; ++c)
            known = known || key == to_string(static_cast<PositionCategory>(c));
          if (!known) invalid("unknown position category \"" + key + "\"");
        }
      }
      a.breath_groups_per_sentence = get_or(ja, "breath_groups_per_sentence", a.breath_groups_per_sentence);
      a.morphemes_per_breath_group = get_or(ja, "morphemes_per_breath_group", a.morphemes_per_breath_group);
      spec.archetypes.push_back(std::move(a));
    }
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    invalid(std::string("synth spec: ") + e.what());
  }
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open synth spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    invalid("synth spec " + path.string() + ": " + e.what());
  }
  return synth_spec_from_json(j);
}

AnnotatedCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);

  // Words that any archetype can emit; noise cues are drawn uniformly from these.
  std::vector<std::size_t> active;
  for (std::size_t w = 0; w < spec.vocabulary.size(); ++w) {
    for (const auto& a : spec.archetypes) {
      if (a.word_distribution[w] > 0.0) {
        active.push_back(w);
        break;
      }
    }
  }

  AnnotatedCorpus corpus{spec.vocabulary, {}};
  for (const auto& a : spec.archetypes) {
    for (std::size_t k = 0; k < a.speakers; ++k) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%03zu", k);
      auto& sentences = corpus.speakers[a.name + suffix];

      for (std::size_t n = 0; n < a.sentences_per_speaker; ++n) {
        const std::size_t group_count = draw(rng, a.breath_groups_per_sentence) + 1;
        std::vector<std::vector<std::string>> groups(group_count);
        std::vector<FpTag> tags;

        for (std::size_t g = 0; g < group_count; ++g) {
          const std::size_t len = draw(rng, a.morphemes_per_breath_group) + 1;
          for (std::size_t m = 0; m < len; ++m) {
            const auto category = tags.empty() ? PositionCategory::SentenceHead
                                  : m == 0     ? PositionCategory::BreathGroupBoundary
                                               : PositionCategory::BreathGroupMiddle;
            FpTag tag = FpTag::none();
            if (coin(rng, a.insertion_probability[static_cast<std::size_t>(category)]))
              tag = FpTag::word(draw(rng, a.word_distribution));

            std::string surface;
            if (tag.is_fp() && coin(rng, spec.cue_strength)) {
              surface = cue_token(spec.vocabulary.words()[tag.word_index()], pick(rng, spec.cues_per_word));
            } else if (!tag.is_fp() && !active.empty() && coin(rng, spec.cue_noise)) {
              surface = cue_token(spec.vocabulary.words()[active[pick(rng, active.size())]], pick(rng, spec.cues_per_word));
            } else {
              surface = neutral_token(pick(rng, spec.neutral_lexicon_size));
            }
            groups[g].push_back(std::move(surface));
            tags.push_back(tag);
          }
        }
        FpTag end = FpTag::none();
        if (coin(rng, a.insertion_probability[static_cast<std::size_t>(PositionCategory::SentenceEnd)]))
          end = FpTag::word(draw(rng, a.word_distribution));
        tags.push_back(end);
        sentences.push_back(make_sentence(std::move(groups), std::move(tags)));
      }
    }
  }
  return corpus;
}

}  // namespace fpp
