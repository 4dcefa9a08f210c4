#include "core/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/error.hpp"

namespace fpp {

namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

constexpr std::string_view kFormatName = "fp-corpus";
constexpr int kFormatVersion = 1;

std::string at_line(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

void require_keys(const json& object, std::initializer_list<std::string_view> keys, std::size_t line) {
  if (!object.is_object()) invalid(at_line(line, "expected a JSON object"));
  for (const auto& [key, value] : object.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      invalid(at_line(line, "unknown field \"" + key + "\""));
  }
  for (auto key : keys) {
    if (!object.contains(std::string(key)))
      invalid(at_line(line, "missing field \"" + std::string(key) + "\""));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// FpVocabulary

FpVocabulary::FpVocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  std::set<std::string_view> seen;
  for (const auto& w : words_) {
    validate_morpheme(w);
    if (w == "NO_FP") invalid("\"NO_FP\" is implicit and cannot be a vocabulary word");
    if (!seen.insert(w).second) invalid("duplicate FP word \"" + w + "\"");
  }
}

FpVocabulary FpVocabulary::standard() {
  return FpVocabulary({"ee", "e", "ma", "ano", "anoo", "maa", "eeto", "a", "aa", "n", "nn", "etto", "aanoo"});
}

std::optional<FpTag> FpVocabulary::find(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) return std::nullopt;
  return FpTag::word(static_cast<std::size_t>(it - words_.begin()));
}

const std::string& FpVocabulary::word(FpTag tag) const {
  if (!tag.is_fp() || tag.word_index() >= words_.size())
    invalid("tag class " + std::to_string(tag.cls) + " is not an FP word of this vocabulary");
  return words_[tag.word_index()];
}

std::string FpVocabulary::label(FpTag tag) const { return tag.is_fp() ? word(tag) : std::string("NO_FP"); }

std::string_view to_string(PositionCategory category) {
  switch (category) {
    case PositionCategory::SentenceHead: return "sentence_head";
    case PositionCategory::BreathGroupBoundary: return "breath_group_boundary";
    case PositionCategory::BreathGroupMiddle: return "breath_group_middle";
    case PositionCategory::SentenceEnd: return "sentence_end";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Sentence / corpus

std::size_t Sentence::morpheme_count() const {
  std::size_t n = 0;
  for (const auto& bg : breath_groups) n += bg.size();
  return n;
}

std::vector<std::string_view> Sentence::morphemes() const {
  std::vector<std::string_view> out;
  out.reserve(morpheme_count());
  for (const auto& bg : breath_groups)
    for (const auto& m : bg) out.emplace_back(m);
  return out;
}

void validate_morpheme(std::string_view surface) {
  if (surface.empty()) invalid("empty token");
  for (unsigned char c : surface) {
    if (c < 0x20 || c == 0x7f || c == ' ')
      invalid("token \"" + std::string(surface) + "\" contains whitespace or control characters");
  }
}

Sentence make_sentence(std::vector<std::vector<std::string>> breath_groups, std::vector<FpTag> fp_tags) {
  Sentence s{std::move(breath_groups), std::move(fp_tags)};
  if (s.breath_groups.empty()) invalid("sentence has no breath groups");
  for (const auto& bg : s.breath_groups) {
    if (bg.empty()) invalid("empty breath group");
    for (const auto& m : bg) validate_morpheme(m);
  }
  if (s.fp_tags.size() != s.slot_count())
    invalid("tag/slot count mismatch: " + std::to_string(s.fp_tags.size()) + " tags for " +
            std::to_string(s.slot_count()) + " slots");
  return s;
}

std::size_t AnnotatedCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& [id, sentences] : speakers) n += sentences.size();
  return n;
}

std::size_t AnnotatedCorpus::slot_count() const {
  std::size_t n = 0;
  for (const auto& [id, sentences] : speakers)
    for (const auto& s : sentences) n += s.slot_count();
  return n;
}

std::size_t AnnotatedCorpus::fp_count() const {
  std::size_t n = 0;
  for (const auto& [id, sentences] : speakers)
    for (const auto& s : sentences)
      n += static_cast<std::size_t>(std::count_if(s.fp_tags.begin(), s.fp_tags.end(), [](FpTag t) { return t.is_fp(); }));
  return n;
}

std::vector<std::string> AnnotatedCorpus::speaker_ids() const {
  std::vector<std::string> ids;
  ids.reserve(speakers.size());
  for (const auto& [id, sentences] : speakers) ids.push_back(id);
  return ids;
}

const std::vector<Sentence>& AnnotatedCorpus::sentences_of(const std::string& speaker_id) const {
  auto it = speakers.find(speaker_id);
  if (it == speakers.end()) invalid("unknown speaker \"" + speaker_id + "\"");
  return it->second;
}

void AnnotatedCorpus::validate() const {
  for (const auto& [id, sentences] : speakers) {
    if (id.empty()) invalid("empty speaker id");
    for (const auto& s : sentences) {
      make_sentence(s.breath_groups, s.fp_tags);
      for (FpTag t : s.fp_tags) {
        if (t.cls >= vocabulary.class_count())
          invalid("speaker \"" + id + "\": tag class " + std::to_string(t.cls) + " outside the vocabulary");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// I/O

AnnotatedCorpus parse_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open corpus file " + path.string());
  return parse_corpus(in);
}

AnnotatedCorpus parse_corpus(std::istream& in) {
  AnnotatedCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json value;
    try {
      value = json::parse(line);
    } catch (const json::exception& e) {
      invalid(at_line(line_no, std::string("malformed JSON: ") + e.what()));
    }

    try {
      if (!have_header) {
        require_keys(value, {"format", "version", "fp_vocabulary"}, line_no);
        if (value["format"] != kFormatName) invalid(at_line(line_no, "not an fp-corpus file"));
        if (!value["version"].is_number_integer() || value["version"].get<int>() != kFormatVersion)
          invalid(at_line(line_no, "unsupported corpus version"));
        try {
          corpus.vocabulary = FpVocabulary(value["fp_vocabulary"].get<std::vector<std::string>>());
        } catch (const Error& e) {
          invalid(at_line(line_no, e.what()));
        }
        have_header = true;
        continue;
      }

      require_keys(value, {"speaker", "breath_groups", "fp_tags"}, line_no);
      const auto& speaker = value["speaker"];
      if (!speaker.is_string() || speaker.get<std::string>().empty())
        invalid(at_line(line_no, "speaker must be a non-empty string"));
      auto groups = value["breath_groups"].get<std::vector<std::vector<std::string>>>();
      const auto& raw_tags = value["fp_tags"];
      if (!raw_tags.is_array()) invalid(at_line(line_no, "fp_tags must be an array"));

      std::vector<FpTag> tags;
      tags.reserve(raw_tags.size());
      for (const auto& t : raw_tags) {
        if (t.is_null()) {
          tags.push_back(FpTag::none());
        } else if (t.is_string()) {
          auto tag = corpus.vocabulary.find(t.get<std::string>());
          if (!tag) invalid(at_line(line_no, "FP word \"" + t.get<std::string>() + "\" not in declared vocabulary"));
          tags.push_back(*tag);
        } else {
          invalid(at_line(line_no, "fp_tags entries must be null or strings"));
        }
      }
      Sentence sentence;
      try {
        sentence = make_sentence(std::move(groups), std::move(tags));
      } catch (const Error& e) {
        invalid(at_line(line_no, e.what()));
      }
      corpus.speakers[speaker.get<std::string>()].push_back(std::move(sentence));
    } catch (const json::exception& e) {
      invalid(at_line(line_no, std::string("schema error: ") + e.what()));
    }
  }
  if (in.bad()) fail(ErrorKind::Io, "read error after line " + std::to_string(line_no));
  if (!have_header) invalid("corpus file has no header line");
  return corpus;
}

void write_corpus(const AnnotatedCorpus& corpus, std::ostream& out) {
  ordered_json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  header["fp_vocabulary"] = corpus.vocabulary.words();
  out << header.dump() << '\n';

  for (const auto& [id, sentences] : corpus.speakers) {
    for (const auto& s : sentences) {
      ordered_json row;
      row["speaker"] = id;
      row["breath_groups"] = s.breath_groups;
      ordered_json tags = ordered_json::array();
      for (FpTag t : s.fp_tags) {
        if (t.is_fp())
          tags.push_back(corpus.vocabulary.word(t));
        else
          tags.push_back(nullptr);
      }
      row["fp_tags"] = std::move(tags);
      out << row.dump() << '\n';
    }
  }
}

void write_corpus(const AnnotatedCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write corpus file " + path.string());
  write_corpus(corpus, out);
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Vocabulary selection

FpVocabulary build_fp_vocabulary(const AnnotatedCorpus& corpus, double speaker_fraction_threshold) {
  if (corpus.speakers.empty()) invalid("cannot build a vocabulary from an empty corpus");
  if (!(speaker_fraction_threshold >= 0.0 && speaker_fraction_threshold <= 1.0))
    invalid("speaker fraction threshold must lie in [0, 1]");

  const std::size_t words = corpus.vocabulary.size();
  std::vector<std::size_t> frequency(words, 0), users(words, 0);
  for (const auto& [id, sentences] : corpus.speakers) {
    std::vector<bool> used(words, false);
    for (const auto& s : sentences) {
      for (FpTag t : s.fp_tags) {
        if (!t.is_fp()) continue;
        ++frequency[t.word_index()];
        used[t.word_index()] = true;
      }
    }
    for (std::size_t w = 0; w < words; ++w) users[w] += used[w] ? 1 : 0;
  }

  const double total = static_cast<double>(corpus.speakers.size());
  std::vector<std::size_t> kept;
  for (std::size_t w = 0; w < words; ++w) {
    if (users[w] == 0) continue;
    // Inclusive boundary; the epsilon absorbs rounding of rational thresholds like 1/5.
    if (static_cast<double>(users[w]) / total + 1e-12 >= speaker_fraction_threshold) kept.push_back(w);
  }
  const auto& names = corpus.vocabulary.words();
  std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    if (frequency[a] != frequency[b]) return frequency[a] > frequency[b];
    return names[a] < names[b];
  });
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (auto w : kept) out.push_back(names[w]);
  return FpVocabulary(std::move(out));
}

AnnotatedCorpus restrict_vocabulary(const AnnotatedCorpus& corpus, const FpVocabulary& vocabulary) {
  std::vector<FpTag> remap(corpus.vocabulary.class_count(), FpTag::none());
  for (std::size_t w = 0; w < corpus.vocabulary.size(); ++w)
    remap[w + 1] = vocabulary.find(corpus.vocabulary.words()[w]).value_or(FpTag::none());

  AnnotatedCorpus out{vocabulary, corpus.speakers};
  for (auto& [id, sentences] : out.speakers)
    for (auto& s : sentences)
      for (auto& t : s.fp_tags) t = remap[t.cls];
  return out;
}

std::vector<PositionCategory> slot_positions(const Sentence& sentence) {
  std::vector<PositionCategory> out;
  out.reserve(sentence.slot_count());
  for (std::size_t g = 0; g < sentence.breath_groups.size(); ++g) {
    for (std::size_t m = 0; m < sentence.breath_groups[g].size(); ++m) {
      if (out.empty())
        out.push_back(PositionCategory::SentenceHead);
      else if (m == 0)
        out.push_back(PositionCategory::BreathGroupBoundary);
      else
        out.push_back(PositionCategory::BreathGroupMiddle);
    }
  }
  out.push_back(PositionCategory::SentenceEnd);
  return out;
}

AnnotatedCorpus select_speakers(const AnnotatedCorpus& corpus, std::span<const std::string> speaker_ids) {
  AnnotatedCorpus out{corpus.vocabulary, {}};
  for (const auto& id : speaker_ids) out.speakers[id] = corpus.sentences_of(id);
  return out;
}

Sentence sentence_from_stream(std::span<const StreamToken> tokens, const FpVocabulary& vocabulary) {
  std::vector<std::vector<std::string>> groups(1);
  std::vector<FpTag> tags;
  FpTag pending = FpTag::none();

  for (const auto& tok : tokens) {
    switch (tok.kind) {
      case StreamToken::Kind::Filler:
        if (!pending.is_fp()) pending = vocabulary.find(tok.text).value_or(FpTag::none());
        break;
      case StreamToken::Kind::BreathBoundary:
        if (!groups.back().empty()) groups.emplace_back();
        break;
      case StreamToken::Kind::Morpheme:
        groups.back().push_back(tok.text);
        tags.push_back(pending);
        pending = FpTag::none();
        break;
    }
  }
  if (groups.back().empty()) groups.pop_back();
  tags.push_back(pending);
  return make_sentence(std::move(groups), std::move(tags));
}

}  // namespace fpp
