#include <doctest.h>

#include <random>
#include <set>

#include "core/error.hpp"
#include "core/profile.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace fpp;

namespace {

std::vector<FeatureVector> random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FeatureVector> pts(n, FeatureVector(dim));
  for (auto& p : pts)
    for (auto& x : p) x = u(rng);
  return pts;
}

std::set<std::set<std::string>> as_sets(const GroupAssignment& g) {
  std::set<std::set<std::string>> out;
  for (const auto& members : g.groups) out.emplace(members.begin(), members.end());
  return out;
}

}  // namespace

TEST_CASE("word usage profile") {
  const auto v = FpVocabulary::standard();
  AnnotatedCorpus c{v, {}};
  c.speakers["s"].push_back(fixture::sentence(v, {{"a", "b"}, {"c"}}, {"ee", "ee", "ma", "ee"}));
  c.speakers["quiet"].push_back(fixture::sentence(v, {{"a"}}, {nullptr, nullptr}));
  const auto p = word_usage_profile(c, "s");
  REQUIRE(p.size() == 13);
  CHECK(p[0] == 0.75);
  CHECK(p[2] == 0.25);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(word_usage_profile(c, "quiet") == FeatureVector(13, 0.0));
  CHECK_THROWS_AS(word_usage_profile(c, "nobody"), Error);
}

TEST_CASE("position usage profile") {
  const FpVocabulary v({"ee"});
  AnnotatedCorpus c{v, {}};
  c.speakers["heads"].push_back(fixture::sentence(v, {{"a"}}, {"ee", nullptr}));
  c.speakers["heads"].push_back(fixture::sentence(v, {{"a", "b"}}, {"ee", nullptr, nullptr}));
  // head, middle, middle, end
  c.speakers["mixed"].push_back(fixture::sentence(v, {{"a", "b", "c"}}, {"ee", "ee", "ee", "ee"}));
  CHECK(position_usage_profile(c, "heads") == FeatureVector{1, 0, 0, 0});
  CHECK(position_usage_profile(c, "mixed") == FeatureVector{0.25, 0, 0.5, 0.25});
}

TEST_CASE("position profile matches a recount from the raw file") {
  const auto corpus = synth_corpus(fixture::two_archetypes(3, 15), 17);
  std::istringstream lines(fixture::write_text(corpus));
  std::string line;
  std::getline(lines, line);  // header
  std::map<std::string, std::array<double, 4>> counts;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto groups = j["breath_groups"].get<std::vector<std::vector<std::string>>>();
    const auto& tags = j["fp_tags"];
    std::size_t slot = 0;
    auto& row = counts[j["speaker"].get<std::string>()];
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (std::size_t m = 0; m < groups[g].size(); ++m, ++slot)
        if (!tags[slot].is_null()) row[slot == 0 ? 0 : (m == 0 ? 1 : 2)] += 1;
    if (!tags[slot].is_null()) row[3] += 1;
  }
  for (const auto& [id, row] : counts) {
    const double total = row[0] + row[1] + row[2] + row[3];
    const auto p = position_usage_profile(corpus, id);
    for (std::size_t k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(total > 0 ? row[k] / total : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("ward: 1-D example") {
  const auto d = ward_cluster({{0.0}, {0.5}, {10.0}, {10.5}});
  REQUIRE(d.merges.size() == 3);
  CHECK(d.merges[0] == Merge{0, 1, d.merges[0].distance, 2});
  CHECK(d.merges[0].distance == 0.5);
  CHECK(d.merges[1].left == 2);
  CHECK(d.merges[1].right == 3);
  CHECK(d.merges[1].distance == 0.5);
  CHECK(d.merges[2].left == 4);
  CHECK(d.merges[2].right == 5);
  CHECK(d.merges[2].distance == doctest::Approx(std::sqrt(2.0) * 10.0).epsilon(1e-12));
  CHECK(d.merges[2].size == 4);
}

TEST_CASE("ward: identical points merge at zero; bad input rejected") {
  const auto d = ward_cluster({{0.3, 0.7}, {0.3, 0.7}});
  REQUIRE(d.merges.size() == 1);
  CHECK(d.merges[0].distance == 0.0);
  CHECK_THROWS_AS(ward_cluster({{1.0}}), Error);
  CHECK_THROWS_AS(ward_cluster({{1.0}, {1.0, 2.0}}), Error);
}

TEST_CASE("ward: merge log equals the naive agglomerator") {
  std::mt19937_64 rng(77);
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n = 2 + rng() % 7, dim = 1 + rng() % 4;
    const auto pts = random_points(rng, n, dim);
    const auto fast = ward_cluster(pts);
    const auto slow = oracle::naive_ward(pts);
    REQUIRE(fast.merges.size() == n - 1);
    REQUIRE(slow.size() == n - 1);
    for (std::size_t k = 0; k < slow.size(); ++k) {
      CHECK(fast.merges[k].left == slow[k].left);
      CHECK(fast.merges[k].right == slow[k].right);
      CHECK(fast.merges[k].size == slow[k].size);
      CHECK(std::abs(fast.merges[k].distance - slow[k].distance) <= 1e-9);
      if (k > 0) CHECK(fast.merges[k].distance >= fast.merges[k - 1].distance);
    }
  }
}

TEST_CASE("cut_dendrogram") {
  const std::vector<FeatureVector> pts{{0.0}, {0.1}, {10.0}, {10.1}};
  const std::vector<std::string> labels{"a", "b", "c", "d"};
  const auto d = ward_cluster(pts);

  const auto two = cut_dendrogram(d, pts, labels, 1.0);
  REQUIRE(two.group_count() == 2);
  CHECK(two.groups[0] == std::vector<std::string>{"a", "b"});
  CHECK(two.groups[1] == std::vector<std::string>{"c", "d"});
  CHECK(two.centroids[0][0] == doctest::Approx(0.05));
  CHECK(two.centroids[1][0] == doctest::Approx(10.05));

  CHECK(cut_dendrogram(d, pts, labels, 0.05).group_count() == 4);
  CHECK(cut_dendrogram(d, pts, labels, 0.0).group_count() == 4);
  CHECK(cut_dendrogram(d, pts, labels, 100.0).group_count() == 1);
  // Strict cut: a merge exactly at the threshold is not applied.
  CHECK(cut_dendrogram(d, pts, labels, d.merges[2].distance).group_count() == 2);
  CHECK_THROWS_AS(cut_dendrogram(d, pts, labels, -1.0), Error);
  CHECK_THROWS_AS(cut_dendrogram(d, pts, labels, std::nan("")), Error);
}

TEST_CASE("cut_dendrogram: ordering, centroids, monotone group count") {
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 30; ++instance) {
    const std::size_t n = 3 + rng() % 10;
    const auto pts = random_points(rng, n, 3);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("s" + std::to_string(100 + i));
    const auto d = ward_cluster(pts);
    std::size_t prev = n + 1;
    for (double t = 0.0; t < 3.0; t += 0.1) {
      const auto g = cut_dendrogram(d, pts, labels, t);
      CHECK(g.group_count() <= prev);
      prev = g.group_count();
      std::size_t members = 0;
      for (std::size_t k = 0; k < g.group_count(); ++k) {
        members += g.groups[k].size();
        if (k > 0) CHECK(g.groups[k - 1].size() >= g.groups[k].size());
        FeatureVector mean(3, 0.0);
        for (const auto& m : g.groups[k]) {
          const auto idx = static_cast<std::size_t>(std::stoi(m.substr(1)) - 100);
          for (std::size_t j = 0; j < 3; ++j) mean[j] += pts[idx][j] / static_cast<double>(g.groups[k].size());
        }
        for (std::size_t j = 0; j < 3; ++j) CHECK(g.centroids[k][j] == doctest::Approx(mean[j]).epsilon(1e-12));
      }
      CHECK(members == n);
    }
  }
}

TEST_CASE("cut_dendrogram: permuting the inputs keeps the partition") {
  std::mt19937_64 rng(99);
  for (int instance = 0; instance < 30; ++instance) {
    const std::size_t n = 3 + rng() % 8;
    auto pts = random_points(rng, n, 2);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("p" + std::to_string(i));
    const auto base = as_sets(cut_dendrogram(ward_cluster(pts), pts, labels, 0.4));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<FeatureVector> p2;
    std::vector<std::string> l2;
    for (auto i : order) {
      p2.push_back(pts[i]);
      l2.push_back(labels[i]);
    }
    CHECK(as_sets(cut_dendrogram(ward_cluster(p2), p2, l2, 0.4)) == base);
  }
}

TEST_CASE("assign_group") {
  GroupAssignment g;
  g.groups = {{"a"}, {"b"}};
  g.centroids = {{1.0, 0.0}, {0.0, 1.0}};
  CHECK(assign_group(g, {0.9, 0.1}) == 0);
  CHECK(assign_group(g, {0.0, 1.0}) == 1);
  CHECK(assign_group(g, {0.5, 0.5}) == 0);  // tie goes to the smaller id
  CHECK_THROWS_AS(assign_group(g, {1.0}), Error);
  CHECK_THROWS_AS(assign_group(GroupAssignment{}, {1.0}), Error);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    GroupAssignment r;
    const std::size_t k = 1 + rng() % 6;
    r.centroids = random_points(rng, k, 4);
    r.groups.assign(k, {});
    const auto p = random_points(rng, 1, 4)[0];
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d += (p[j] - r.centroids[c][j]) * (p[j] - r.centroids[c][j]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    CHECK(assign_group(r, p) == best);
  }
}

TEST_CASE("cluster_speakers: planted archetypes, JSON round trip") {
  const auto corpus = synth_corpus(fixture::two_archetypes(6, 40), 21);
  const auto g = cluster_speakers(corpus, ProfileFeature::Word, 1.0);
  REQUIRE(g.group_count() == 2);
  std::set<std::set<std::string>> expected;
  std::set<std::string> alpha, beta;
  for (const auto& id : corpus.speaker_ids()) (id.rfind("alpha", 0) == 0 ? alpha : beta).insert(id);
  expected = {alpha, beta};
  CHECK(as_sets(g) == expected);

  for (const auto& id : corpus.speaker_ids()) {
    const auto p = speaker_profile(corpus, id).word_rates;
    const auto k = assign_group(g, p);
    CHECK(std::find(g.groups[k].begin(), g.groups[k].end(), id) != g.groups[k].end());
  }

  const auto back = group_assignment_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK(back.groups == g.groups);
  CHECK(back.centroids == g.centroids);
  CHECK(back.feature == g.feature);

  AnnotatedCorpus one{corpus.vocabulary, {{"solo", corpus.sentences_of("alpha_000")}}};
  CHECK_THROWS_AS(cluster_speakers(one, ProfileFeature::Word, 1.0), Error);
  CHECK(default_cut_threshold(ProfileFeature::Word) == 1.0);
  CHECK(default_cut_threshold(ProfileFeature::Position) == 1.7);
}
