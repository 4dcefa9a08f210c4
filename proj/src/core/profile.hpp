#pragma once

// Speaker FP-usage profiles and Ward agglomerative clustering.

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/corpus.hpp"

namespace fpp {

using FeatureVector = std::vector<double>;

enum class ProfileFeature { Word, Position };

std::string_view to_string(ProfileFeature feature);
ProfileFeature parse_profile_feature(std::string_view name);
/// Reference cut thresholds: 1.0 for word profiles, 1.7 for position profiles.
double default_cut_threshold(ProfileFeature feature);

struct SpeakerProfile {
  std::string speaker_id;
  FeatureVector word_rates;      // one entry per vocabulary word
  FeatureVector position_rates;  // SentenceHead, BreathGroupBoundary, BreathGroupMiddle, SentenceEnd

  const FeatureVector& features(ProfileFeature f) const { return f == ProfileFeature::Word ? word_rates : position_rates; }
};

/// Share of each FP word among the speaker's FPs; all zeros when there are none.
FeatureVector word_usage_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id);
/// Share of each position category among the speaker's FP-bearing slots.
FeatureVector position_usage_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id);
SpeakerProfile speaker_profile(const AnnotatedCorpus& corpus, const std::string& speaker_id);

struct Merge {
  std::size_t left = 0;   // smaller cluster id
  std::size_t right = 0;  // larger cluster id
  double distance = 0.0;
  std::size_t size = 0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

/// Agglomerative merge log over `leaf_count` leaves. Leaves are ids
/// 0..N-1; the cluster created by merge k gets id N+k.
struct Dendrogram {
  std::size_t leaf_count = 0;
  std::vector<Merge> merges;
};

/// Ward linkage on Euclidean distance, scaled so two singletons are exactly
/// their Euclidean distance apart:
///   d(A, B) = sqrt(2|A||B| / (|A|+|B|)) * ||centroid(A) - centroid(B)||.
/// Equal distances merge the pair with the smallest (min id, max id).
Dendrogram ward_cluster(const std::vector<FeatureVector>& points);

struct GroupAssignment {
  ProfileFeature feature = ProfileFeature::Word;
  double threshold = 0.0;
  /// Group g is "g<index>"; members sorted.
  std::vector<std::vector<std::string>> groups;
  std::vector<FeatureVector> centroids;

  std::size_t group_count() const { return groups.size(); }
  static std::string group_name(std::size_t index) { return "g" + std::to_string(index); }
};

/// Applies every merge closer than `threshold`. Groups are ordered by
/// descending size, then by smallest member leaf index.
GroupAssignment cut_dendrogram(const Dendrogram& dendrogram, const std::vector<FeatureVector>& points,
                               const std::vector<std::string>& labels, double threshold);

/// Nearest centroid by Euclidean distance; ties go to the smaller group index.
std::size_t assign_group(const GroupAssignment& assignment, const FeatureVector& profile);

nlohmann::ordered_json to_json(const GroupAssignment& assignment);
GroupAssignment group_assignment_from_json(const nlohmann::json& j);

/// Profiles every speaker, clusters on the chosen feature and cuts at `threshold`.
GroupAssignment cluster_speakers(const AnnotatedCorpus& corpus, ProfileFeature feature, double threshold);

}  // namespace fpp
