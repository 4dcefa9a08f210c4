#pragma once

// Evaluation protocol: binary position metrics, one-vs-rest FP word metrics,
// gold-frequency-weighted word averages, per-FP and per-speaker breakdowns.
// Any ratio with a zero denominator is reported as 0.0.

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/corpus.hpp"
#include "core/train.hpp"

namespace fpp {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  double specificity = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics metrics_from(const Counts& c);

/// Slot-level confusion counts. `per_class[c]` is one-vs-rest for class c
/// (index 0 is NO_FP); `position` treats any FP word as positive.
struct ConfusionCounts {
  Counts position;
  std::vector<Counts> per_class;
  std::vector<std::size_t> gold_class_counts;
  std::size_t slots = 0;

  explicit ConfusionCounts(std::size_t classes = 0) : per_class(classes), gold_class_counts(classes, 0) {}

  void add(std::span<const FpTag> predicted, std::span<const FpTag> gold);
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  /// Throws Runtime if any class breaks TP+FP+FN+TN = slots.
  void check() const;
};

Metrics position_metrics(std::span<const std::vector<FpTag>> predicted, std::span<const std::vector<FpTag>> gold);

struct WordScore {
  std::string word;
  Metrics metrics;
  std::size_t gold_count = 0;
};

/// One entry per vocabulary word, in vocabulary order.
std::vector<WordScore> per_word_metrics(std::span<const std::vector<FpTag>> predicted, std::span<const std::vector<FpTag>> gold,
                                        const FpVocabulary& vocabulary);

struct WeightedAverage {
  Metrics metrics;
  bool no_gold_fps = false;  // every count was zero; metrics are all 0.0
};

/// sum_w count_w * m_w / sum_w count_w, per metric.
WeightedAverage weighted_word_average(std::span<const WordScore> per_word);

struct MetricsReport {
  Metrics position;
  std::vector<WordScore> per_word;
  Metrics word_weighted;
  bool no_gold_fps = false;
  std::size_t slots = 0;
  std::size_t gold_fps = 0;
};

MetricsReport report_from_counts(const ConfusionCounts& counts, const FpVocabulary& vocabulary);
/// Unweighted mean over reports (e.g. CV folds); slot and FP totals are summed.
MetricsReport mean_report(std::span<const MetricsReport> reports);

using Predictor = std::function<std::vector<FpTag>(const Sentence&, const SentenceKey&)>;
Predictor model_predictor(const TaggerModel& model);

ConfusionCounts confusion_over(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const Predictor& predict);
MetricsReport evaluate(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const Predictor& predict);
/// Throws InvalidInput when the checkpoint vocabulary differs from the corpus.
MetricsReport evaluate_model(const Checkpoint& ckpt, const AnnotatedCorpus& corpus, const SentenceSelection& selection);
MetricsReport evaluate_model(const Checkpoint& ckpt, const AnnotatedCorpus& corpus);

struct CvReport {
  std::vector<MetricsReport> folds;
  MetricsReport mean;
};
CvReport aggregate_folds(std::vector<MetricsReport> folds);

/// Per-word scores ordered by descending gold count, ties lexicographic.
std::vector<WordScore> per_fp_breakdown(const MetricsReport& report);

struct SpeakerScore {
  std::string speaker;
  MetricsReport report;
};
/// One report per speaker present in `selection`, in speaker-id order.
std::vector<SpeakerScore> per_speaker_distribution(const AnnotatedCorpus& corpus, const SentenceSelection& selection,
                                                   const Predictor& predict);

nlohmann::ordered_json to_json(const Metrics& m);
nlohmann::ordered_json to_json(const MetricsReport& report);
nlohmann::ordered_json to_json(const CvReport& report);

/// Columns: key, precision, recall, f, specificity, gold_count.
std::string breakdown_csv(std::span<const WordScore> rows);
std::string speaker_csv(std::span<const SpeakerScore> rows, bool word_weighted);
/// Fixed-width table for terminals.
std::string format_report(const MetricsReport& report, const std::string& title);

}  // namespace fpp
