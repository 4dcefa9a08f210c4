#include <doctest.h>

#include <map>
#include <set>

#include "core/error.hpp"
#include "support/fixtures.hpp"

using namespace fpp;

namespace {

const std::string kHeader = R"({"format":"fp-corpus","version":1,"fp_vocabulary":["ee","e","ma"]})";

std::string with_lines(std::initializer_list<std::string> lines) {
  std::string out = kHeader + "\n";
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

TEST_CASE("vocabulary tag space") {
  const auto v = FpVocabulary::standard();
  CHECK(v.size() == 13);
  CHECK(v.class_count() == 14);
  CHECK(v.words().front() == "ee");
  CHECK(v.words().back() == "aanoo");
  CHECK(v.label(FpTag::none()) == "NO_FP");
  CHECK(v.word(*v.find("ma")) == "ma");
  CHECK_FALSE(v.find("uh").has_value());
  CHECK_THROWS_AS(FpVocabulary({"ee", "ee"}), Error);
  CHECK_THROWS_AS(FpVocabulary({"NO_FP"}), Error);
}

TEST_CASE("parse: slot count is morphemes plus one") {
  const auto c = fixture::parse_text(with_lines({R"({"speaker":"s1","breath_groups":[["a","b"]],"fp_tags":[null,"ee",null]})"}));
  const auto& s = c.sentences_of("s1").at(0);
  CHECK(s.slot_count() == 3);
  CHECK(s.fp_tags[1] == FpTag::word(0));
  CHECK(c.fp_count() == 1);
}

TEST_CASE("parse: errors name the offending line") {
  SUBCASE("tag/slot mismatch") {
    try {
      fixture::parse_text(with_lines({R"({"speaker":"s1","breath_groups":[["a","b"]],"fp_tags":[null,null]})"}));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidInput);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
      CHECK(std::string(e.what()).find("tag/slot count mismatch") != std::string::npos);
    }
  }
  SUBCASE("mismatch on line 7") {
    std::string text = kHeader + "\n";
    for (int i = 0; i < 5; ++i) text += R"({"speaker":"s","breath_groups":[["a"]],"fp_tags":[null,null]})" "\n";
    text += R"({"speaker":"s","breath_groups":[["a"]],"fp_tags":[null]})" "\n";
    try {
      fixture::parse_text(text);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("line 7:", 0) == 0);
    }
  }
  SUBCASE("unknown key") {
    CHECK_THROWS_AS(fixture::parse_text(with_lines({R"({"speaker":"s","breath_groups":[["a"]],"fp_tags":[null,null],"x":1})"})),
                    Error);
  }
  SUBCASE("word outside declared vocabulary") {
    CHECK_THROWS_AS(fixture::parse_text(with_lines({R"({"speaker":"s","breath_groups":[["a"]],"fp_tags":["uh",null]})"})), Error);
  }
  SUBCASE("whitespace inside a morpheme") {
    CHECK_THROWS_AS(fixture::parse_text(with_lines({R"({"speaker":"s","breath_groups":[["a b"]],"fp_tags":[null,null]})"})), Error);
  }
  SUBCASE("empty breath group") {
    CHECK_THROWS_AS(fixture::parse_text(with_lines({R"({"speaker":"s","breath_groups":[[]],"fp_tags":[null]})"})), Error);
  }
  SUBCASE("malformed JSON") { CHECK_THROWS_AS(fixture::parse_text(with_lines({"{nope"})), Error); }
  SUBCASE("bad header") { CHECK_THROWS_AS(fixture::parse_text(R"({"format":"other","version":1,"fp_vocabulary":[]})" "\n"), Error); }
}

TEST_CASE("write: canonical and round-trips") {
  const auto spec = fixture::two_archetypes(3, 6);
  auto corpus = synth_corpus(spec, 11);
  CHECK(corpus.speakers.size() == 6);
  const auto text = fixture::write_text(corpus);
  const auto back = fixture::parse_text(text);
  CHECK(back == corpus);
  CHECK(fixture::write_text(back) == text);

  SUBCASE("empty corpus is a header line only") {
    AnnotatedCorpus empty{FpVocabulary({"ee"}), {}};
    const auto t = fixture::write_text(empty);
    CHECK(std::count(t.begin(), t.end(), '\n') == 1);
    CHECK(fixture::parse_text(t) == empty);
  }
}

TEST_CASE("slot positions") {
  const FpVocabulary v({"ee"});
  using P = PositionCategory;
  CHECK(slot_positions(fixture::sentence(v, {{"m1", "m2"}, {"m3"}}, {nullptr, nullptr, nullptr, nullptr})) ==
        std::vector<P>{P::SentenceHead, P::BreathGroupMiddle, P::BreathGroupBoundary, P::SentenceEnd});
  CHECK(slot_positions(fixture::sentence(v, {{"m1"}}, {nullptr, nullptr})) == std::vector<P>{P::SentenceHead, P::SentenceEnd});
}

TEST_CASE("slot positions: per-sentence category counts and re-scan oracle") {
  const auto corpus = synth_corpus(fixture::two_archetypes(5, 10), 3);
  std::array<std::size_t, 4> counts{}, oracle{};
  for (const auto& [id, sentences] : corpus.speakers) {
    for (const auto& s : sentences) {
      const auto pos = slot_positions(s);
      REQUIRE(pos.size() == s.slot_count());
      CHECK(std::count(pos.begin(), pos.end(), PositionCategory::SentenceHead) == 1);
      CHECK(std::count(pos.begin(), pos.end(), PositionCategory::SentenceEnd) == 1);
      CHECK(static_cast<std::size_t>(std::count(pos.begin(), pos.end(), PositionCategory::BreathGroupBoundary)) ==
            s.breath_groups.size() - 1);
      for (auto p : pos) ++counts[static_cast<std::size_t>(p)];

      // Walk the breath groups directly.
      for (std::size_t g = 0; g < s.breath_groups.size(); ++g) {
        for (std::size_t m = 0; m < s.breath_groups[g].size(); ++m) {
          if (g == 0 && m == 0) ++oracle[0];
          else if (m == 0) ++oracle[1];
          else ++oracle[2];
        }
      }
      ++oracle[3];
    }
  }
  CHECK(counts == oracle);
}

TEST_CASE("build_fp_vocabulary") {
  SUBCASE("threshold boundary is inclusive") {
    AnnotatedCorpus c{FpVocabulary({"ee", "zzz"}), {}};
    const auto& v = c.vocabulary;
    for (int s = 0; s < 5; ++s) {
      const char* w = s < 3 ? "ee" : (s == 3 ? "zzz" : nullptr);
      c.speakers["s" + std::to_string(s)].push_back(fixture::sentence(v, {{"a"}}, {w, nullptr}));
    }
    CHECK(build_fp_vocabulary(c, 0.2).words() == std::vector<std::string>{"ee", "zzz"});
    CHECK(build_fp_vocabulary(c, 0.25).words() == std::vector<std::string>{"ee"});
  }
  SUBCASE("brute-force usage-table oracle on 10 speakers") {
    SynthSpec spec = fixture::two_archetypes(5, 4);
    spec.archetypes[1].word_distribution.assign(spec.vocabulary.size(), 0.0);
    spec.archetypes[1].word_distribution[spec.vocabulary.find("n")->word_index()] = 0.9;
    spec.archetypes[1].word_distribution[spec.vocabulary.find("a")->word_index()] = 0.1;
    const auto c = synth_corpus(spec, 5);
    for (double threshold : {0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0}) {
      std::map<std::string, std::set<std::string>> users;
      std::map<std::string, std::size_t> freq;
      for (const auto& [id, sentences] : c.speakers)
        for (const auto& s : sentences)
          for (auto t : s.fp_tags)
            if (t.is_fp()) {
              users[c.vocabulary.word(t)].insert(id);
              ++freq[c.vocabulary.word(t)];
            }
      std::set<std::string> expected;
      for (const auto& [w, who] : users)
        if (static_cast<double>(who.size()) >= threshold * static_cast<double>(c.speakers.size()) - 1e-12) expected.insert(w);

      const auto got = build_fp_vocabulary(c, threshold).words();
      CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
      for (std::size_t i = 1; i < got.size(); ++i) {
        const bool ordered = freq[got[i - 1]] > freq[got[i]] || (freq[got[i - 1]] == freq[got[i]] && got[i - 1] < got[i]);
        CHECK(ordered);
      }
    }
  }
  SUBCASE("monotone in the threshold") {
    const auto c = synth_corpus(fixture::two_archetypes(4, 5), 8);
    std::size_t prev = SIZE_MAX;
    for (double t = 0.0; t <= 1.0; t += 0.05) {
      const auto n = build_fp_vocabulary(c, t).size();
      CHECK(n <= prev);
      prev = n;
    }
  }
  SUBCASE("empty corpus") { CHECK_THROWS_AS(build_fp_vocabulary(AnnotatedCorpus{}, 0.2), Error); }
}

TEST_CASE("restrict_vocabulary re-indexes and drops") {
  const FpVocabulary full({"ee", "ma", "ano"});
  AnnotatedCorpus c{full, {}};
  c.speakers["s"].push_back(fixture::sentence(full, {{"a", "b"}}, {"ma", "ano", "ee"}));
  const auto r = restrict_vocabulary(c, FpVocabulary({"ano", "ee"}));
  const auto& tags = r.sentences_of("s")[0].fp_tags;
  CHECK(tags[0] == FpTag::none());
  CHECK(tags[1] == FpTag::word(0));
  CHECK(tags[2] == FpTag::word(1));
}

TEST_CASE("select_speakers") {
  const auto c = synth_corpus(fixture::two_archetypes(2, 3), 1);
  const std::vector<std::string> ids{"alpha_001"};
  const auto sub = select_speakers(c, ids);
  CHECK(sub.speaker_ids() == ids);
  CHECK(sub.sentence_count() == 3);
  const std::vector<std::string> unknown{"nobody"};
  CHECK_THROWS_AS(select_speakers(c, unknown), Error);
}

TEST_CASE("sentence_from_stream keeps the first in-vocabulary filler") {
  const FpVocabulary v({"maa", "anoo"});
  using K = StreamToken::Kind;
  const std::vector<StreamToken> tokens{{K::Filler, "maa"},   {K::Filler, "anoo"}, {K::Morpheme, "a"}, {K::BreathBoundary, ""},
                                        {K::Filler, "uh"},    {K::Morpheme, "b"},  {K::Morpheme, "c"}, {K::Filler, "anoo"}};
  const auto s = sentence_from_stream(tokens, v);
  CHECK(s.breath_groups == std::vector<std::vector<std::string>>{{"a"}, {"b", "c"}});
  CHECK(s.fp_tags == std::vector<FpTag>{FpTag::word(0), FpTag::none(), FpTag::none(), FpTag::word(1)});
}
