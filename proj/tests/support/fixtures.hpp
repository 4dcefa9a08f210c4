#pragma once

// Small builders shared by the unit tests.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/synth.hpp"

namespace fixture {

inline fpp::FpTag tag(const fpp::FpVocabulary& v, const char* word) { return word ? *v.find(word) : fpp::FpTag::none(); }

/// Sentence from breath groups and word-or-null tags against `v`.
inline fpp::Sentence sentence(const fpp::FpVocabulary& v, std::vector<std::vector<std::string>> groups,
                              std::vector<const char*> tags) {
  std::vector<fpp::FpTag> t;
  for (auto* w : tags) t.push_back(tag(v, w));
  return fpp::make_sentence(std::move(groups), std::move(t));
}

inline fpp::AnnotatedCorpus parse_text(const std::string& text) {
  std::istringstream in(text);
  return fpp::parse_corpus(in);
}

inline std::string write_text(const fpp::AnnotatedCorpus& c) {
  std::ostringstream out;
  fpp::write_corpus(c, out);
  return out.str();
}

/// Two archetypes over the standard vocabulary with distinct word preferences.
inline fpp::SynthSpec two_archetypes(std::size_t speakers_each, std::size_t sentences_each) {
  fpp::SynthSpec spec;
  const auto& v = spec.vocabulary;
  fpp::Archetype a;
  a.name = "alpha";
  a.speakers = speakers_each;
  a.sentences_per_speaker = sentences_each;
  a.word_distribution.assign(v.size(), 0.0);
  a.word_distribution[v.find("ee")->word_index()] = 0.8;
  a.word_distribution[v.find("ma")->word_index()] = 0.2;
  a.insertion_probability = {0.5, 0.3, 0.05, 0.1};
  fpp::Archetype b = a;
  b.name = "beta";
  b.word_distribution.assign(v.size(), 0.0);
  b.word_distribution[v.find("ano")->word_index()] = 0.7;
  b.word_distribution[v.find("eeto")->word_index()] = 0.3;
  b.insertion_probability = {0.2, 0.4, 0.1, 0.0};
  spec.archetypes = {a, b};
  return spec;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fpp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fixture
