#include "core/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "core/error.hpp"

namespace fpp {

namespace {

using json = nlohmann::json;

FeatureVector normalized(std::vector<std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  FeatureVector out(counts.size(), 0.0);
  if (total == 0.0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / total;
  return out;
}

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::string_view to_string(ProfileFeature feature) { return feature == ProfileFeature::Word ? "word" : "position"; }

ProfileFeature parse_profile_feature(std::string_view name) {
  if (name == "word") return ProfileFeature::Word;
  if (name == "position") return ProfileFeature::Position;
  invalid("feature must be \"word\" or \"position\", got \"" + std::string(name) + "\"");
}

double default_cut_threshold(ProfileFeature feature) { return feature == ProfileFeature::Word ? 1.0 : 1.7; }

FeatureVector word_usage_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id) {
  std::vector<std::size_t> counts(corpus.vocabulary.size(), 0);
  for (const auto& s : corpus.sentences_of(speaker_id))
    for (FpTag t : s.fp_tags)
      if (t.is_fp()) ++counts[t.word_index()];
  return normalized(std::move(counts));
}

FeatureVector position_usage_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id) {
  std::vector<std::size_t> counts(kPositionCategoryCount, 0);
  for (const auto& s : corpus.sentences_of(speaker_id)) {
    const auto positions = slot_positions(s);
    for (std::size_t i = 0; i < s.fp_tags.size(); ++i)
      if (s.fp_tags[i].is_fp()) ++counts[static_cast<std::size_t>(positions[i])];
  }
  return normalized(std::move(counts));
}

SpeakerProfile speaker_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id) {
  return {speaker_id, word_usage_profile(corpus, speaker_id), position_usage_profile(corpus, speaker_id)};
}

Dendrogram ward_cluster(const std::vector<FeatureVector>& points) {
  const std::size_t n = points.size();
  if (n < 2) invalid("clustering needs at least 2 profiles");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) invalid("profile dimension mismatch");

  // Squared linkage between active slots. Slot i holds cluster ids[i].
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = squared_distance(points[i], points[j]);

  std::vector<std::size_t> ids(n), sizes(n, 1);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::vector<bool> active(n, true);

  Dendrogram out{n, {}};
  out.merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = n, best_b = n;
    auto best_key = std::make_tuple(std::numeric_limits<double>::infinity(), n * 2, n * 2);
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        auto key = std::make_tuple(dist[a * n + b], std::min(ids[a], ids[b]), std::max(ids[a], ids[b]));
        if (key < best_key) {
          best_key = key;
          best_a = a;
          best_b = b;
        }
      }
    }

    const double nij = static_cast<double>(sizes[best_a] + sizes[best_b]);
    const double d_ab = dist[best_a * n + best_b];
    // Lance-Williams update for Ward, merged cluster reuses slot best_a.
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == best_a || k == best_b) continue;
      const double nk = static_cast<double>(sizes[k]);
      const double updated = ((static_cast<double>(sizes[best_a]) + nk) * dist[k * n + best_a] +
                              (static_cast<double>(sizes[best_b]) + nk) * dist[k * n + best_b] - nk * d_ab) /
                             (nij + nk);
      dist[k * n + best_a] = dist[best_a * n + k] = std::max(updated, 0.0);
    }

    out.merges.push_back({std::get<1>(best_key), std::get<2>(best_key), std::sqrt(std::max(d_ab, 0.0)),
                          sizes[best_a] + sizes[best_b]});
    ids[best_a] = n + step;
    sizes[best_a] += sizes[best_b];
    active[best_b] = false;
  }
  return out;
}

GroupAssignment cut_dendrogram(const Dendrogram& dendrogram, const std::vector<FeatureVector>& points,
                               const std::vector<std::string>& labels, double threshold) {
  const std::size_t n = dendrogram.leaf_count;
  if (!(threshold >= 0.0)) invalid("cut threshold must be non-negative");
  if (points.size() != n || labels.size() != n) invalid("cut_dendrogram: points/labels do not match the leaf count");
  if (dendrogram.merges.size() + 1 != n) invalid("dendrogram must hold exactly N-1 merges");

  // Union-find over leaves; any cluster id resolves to one representative leaf.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::size_t> representative(n + dendrogram.merges.size());
  std::iota(representative.begin(), representative.begin() + static_cast<std::ptrdiff_t>(n), std::size_t{0});

  for (std::size_t k = 0; k < dendrogram.merges.size(); ++k) {
    const auto& m = dendrogram.merges[k];
    if (m.left >= n + k || m.right >= n + k) invalid("dendrogram references a cluster before it exists");
    const std::size_t a = representative[m.left], b = representative[m.right];
    representative[n + k] = a;
    if (m.distance < threshold) parent[find(b)] = find(a);
  }

  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> root_to_group(n, n);
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    const std::size_t r = find(leaf);
    if (root_to_group[r] == n) {
      root_to_group[r] = members.size();
      members.emplace_back();
    }
    members[root_to_group[r]].push_back(leaf);
  }
  // Leaves were visited in order, so front() is each group's smallest leaf.
  std::stable_sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });

  GroupAssignment out;
  out.threshold = threshold;
  const std::size_t dim = points.front().size();
  for (const auto& group : members) {
    std::vector<std::string> names;
    FeatureVector centroid(dim, 0.0);
    for (std::size_t leaf : group) {
      names.push_back(labels[leaf]);
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += points[leaf][i];
    }
    for (double& c : centroid) c /= static_cast<double>(group.size());
    std::sort(names.begin(), names.end());
    out.groups.push_back(std::move(names));
    out.centroids.push_back(std::move(centroid));
  }
  return out;
}

std::size_t assign_group(const GroupAssignment& assignment, const FeatureVector& profile) {
  if (assignment.centroids.empty()) invalid("group assignment is empty");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < assignment.centroids.size(); ++g) {
    if (assignment.centroids[g].size() != profile.size()) invalid("profile dimension does not match the group centroids");
    const double d = squared_distance(assignment.centroids[g], profile);
    if (d < best_d) {
      best_d = d;
      best = g;
    }
  }
  return best;
}

nlohmann::ordered_json to_json(const GroupAssignment& assignment) {
  nlohmann::ordered_json groups = nlohmann::ordered_json::object(), centroids = nlohmann::ordered_json::object();
  for (std::size_t g = 0; g < assignment.groups.size(); ++g) {
    groups[GroupAssignment::group_name(g)] = assignment.groups[g];
    centroids[GroupAssignment::group_name(g)] = assignment.centroids[g];
  }
  nlohmann::ordered_json out;
  out["feature"] = to_string(assignment.feature);
  out["threshold"] = assignment.threshold;
  out["groups"] = std::move(groups);
  out["centroids"] = std::move(centroids);
  return out;
}

GroupAssignment group_assignment_from_json(const json& j) {
  try {
    GroupAssignment out;
    out.feature = parse_profile_feature(j.at("feature").get<std::string>());
    out.threshold = j.at("threshold").get<double>();
    const auto& groups = j.at("groups");
    const auto& centroids = j.at("centroids");
    if (groups.size() != centroids.size()) invalid("groups and centroids disagree in count");
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto name = GroupAssignment::group_name(g);
      if (!groups.contains(name) || !centroids.contains(name)) invalid("group ids must be g0..g" + std::to_string(groups.size() - 1));
      out.groups.push_back(groups.at(name).get<std::vector<std::string>>());
      out.centroids.push_back(centroids.at(name).get<FeatureVector>());
    }
    return out;
  } catch (const json::exception& e) {
    invalid(std::string("group assignment: ") + e.what());
  }
}

GroupAssignment cluster_speakers(const AnnotatedCorpus& corpus, ProfileFeature feature, double threshold) {
  if (corpus.speakers.size() < 2) invalid("clustering needs at least 2 speakers");
  std::vector<std::string> labels = corpus.speaker_ids();
  std::vector<FeatureVector> points;
  points.reserve(labels.size());
  for (const auto& id : labels) points.push_back(speaker_profile(corpus, id).features(feature));
  auto assignment = cut_dendrogram(ward_cluster(points), points, labels, threshold);
  assignment.feature = feature;
  return assignment;
}

}  // namespace fpp
