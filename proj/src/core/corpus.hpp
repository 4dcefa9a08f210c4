#pragma once

// Annotated corpus model: speakers -> sentences -> breath groups -> morphemes,
// with one filled-pause tag per slot. A slot is the position immediately
// before a morpheme; every sentence carries one extra sentence-end slot.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fpp {

/// Tag class of one slot. Class 0 is NO_FP; class k > 0 is vocabulary word k-1.
struct FpTag {
  std::uint32_t cls = 0;

  static constexpr FpTag none() { return FpTag{0}; }
  static constexpr FpTag word(std::size_t index) { return FpTag{static_cast<std::uint32_t>(index + 1)}; }

  constexpr bool is_fp() const { return cls != 0; }
  constexpr std::size_t word_index() const { return cls - 1; }

  friend constexpr auto operator<=>(const FpTag&, const FpTag&) = default;
};

/// Ordered FP word list. NO_FP is implicit (class 0) and never listed.
class FpVocabulary {
 public:
  FpVocabulary() = default;
  explicit FpVocabulary(std::vector<std::string> words);

  /// The 13 romanized words of the reference lecture-corpus setup.
  static FpVocabulary standard();

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  std::size_t class_count() const { return words_.size() + 1; }

  std::optional<FpTag> find(std::string_view word) const;
  const std::string& word(FpTag tag) const;
  /// "NO_FP" for class 0, the word otherwise.
  std::string label(FpTag tag) const;

  friend bool operator==(const FpVocabulary&, const FpVocabulary&) = default;

 private:
  std::vector<std::string> words_;
};

enum class PositionCategory : std::uint8_t {
  SentenceHead = 0,
  BreathGroupBoundary = 1,
  BreathGroupMiddle = 2,
  SentenceEnd = 3,
};
inline constexpr std::size_t kPositionCategoryCount = 4;

std::string_view to_string(PositionCategory category);

struct Sentence {
  std::vector<std::vector<std::string>> breath_groups;
  std::vector<FpTag> fp_tags;

  std::size_t morpheme_count() const;
  std::size_t slot_count() const { return morpheme_count() + 1; }
  /// Morpheme surfaces in sentence-flattened order.
  std::vector<std::string_view> morphemes() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Throws InvalidInput unless the surface is non-empty with no whitespace or control bytes.
void validate_morpheme(std::string_view surface);

/// Builds a sentence and checks the slot invariant (tags = morphemes + 1).
Sentence make_sentence(std::vector<std::vector<std::string>> breath_groups, std::vector<FpTag> fp_tags);

struct AnnotatedCorpus {
  FpVocabulary vocabulary;
  std::map<std::string, std::vector<Sentence>> speakers;

  std::size_t sentence_count() const;
  std::size_t slot_count() const;
  std::size_t fp_count() const;
  std::vector<std::string> speaker_ids() const;
  const std::vector<Sentence>& sentences_of(const std::string& speaker_id) const;

  /// Checks every structural invariant; throws InvalidInput on the first violation.
  void validate() const;

  friend bool operator==(const AnnotatedCorpus&, const AnnotatedCorpus&) = default;
};

AnnotatedCorpus parse_corpus(const std::filesystem::path& path);
AnnotatedCorpus parse_corpus(std::istream& in);

/// Canonical JSON-lines: header, then sentences grouped by speaker in id order.
void write_corpus(const AnnotatedCorpus& corpus, const std::filesystem::path& path);
void write_corpus(const AnnotatedCorpus& corpus, std::ostream& out);

/// Keeps words used by at least `speaker_fraction_threshold` of the speakers,
/// ordered by descending corpus frequency, ties lexicographic.
FpVocabulary build_fp_vocabulary(const AnnotatedCorpus& corpus, double speaker_fraction_threshold = 0.20);

/// Re-indexes tags against `vocabulary`; FPs whose word is absent become NO_FP.
AnnotatedCorpus restrict_vocabulary(const AnnotatedCorpus& corpus, const FpVocabulary& vocabulary);

/// One category per slot. Slot 0 is the head, the sentinel is the end, a slot
/// opening a non-initial breath group is a boundary, anything else is middle.
std::vector<PositionCategory> slot_positions(const Sentence& sentence);

/// Corpus restricted to the listed speakers (unknown ids throw).
AnnotatedCorpus select_speakers(const AnnotatedCorpus& corpus, std::span<const std::string> speaker_ids);

/// Raw annotated token stream, e.g. from a transcription converter.
struct StreamToken {
  enum class Kind { Morpheme, Filler, BreathBoundary };
  Kind kind = Kind::Morpheme;
  std::string text;
};

/// Folds a token stream into a sentence. Several fillers before the same
/// morpheme collapse to the first one; fillers outside the vocabulary are dropped.
Sentence sentence_from_stream(std::span<const StreamToken> tokens, const FpVocabulary& vocabulary);

}  // namespace fpp
