#include "core/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "core/error.hpp"

namespace fpp {

namespace {

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

ConfusionCounts confusion_of(std::span<const std::vector<FpTag>> predicted, std::span<const std::vector<FpTag>> gold,
                             std::size_t classes) {
  if (predicted.size() != gold.size()) invalid("prediction and gold sentence counts differ");
  ConfusionCounts counts(classes);
  for (std::size_t i = 0; i < gold.size(); ++i) counts.add(predicted[i], gold[i]);
  return counts;
}

std::size_t class_span(std::span<const std::vector<FpTag>> a, std::span<const std::vector<FpTag>> b, std::size_t at_least) {
  std::size_t c = at_least;
  for (auto seqs : {a, b})
    for (const auto& s : seqs)
      for (FpTag t : s) c = std::max<std::size_t>(c, t.cls + 1);
  return c;
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

void csv_row(std::ostringstream& out, const std::string& key, const Metrics& m, std::size_t gold) {
  // Keys are FP words or speaker ids; quote only when needed.
  if (key.find_first_of(",\"") != std::string::npos) {
    out << '"';
    for (char c : key) out << (c == '"' ? std::string("\"\"") : std::string(1, c));
    out << '"';
  } else {
    out << key;
  }
  out << ',' << format_number(m.precision) << ',' << format_number(m.recall) << ',' << format_number(m.f) << ','
      << format_number(m.specificity) << ',' << gold << '\n';
}

}  // namespace

Metrics metrics_from(const Counts& c) {
  Metrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  // Harmonic mean of precision and recall, taken straight from the counts.
  m.f = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

void ConfusionCounts::add(std::span<const FpTag> predicted, std::span<const FpTag> gold) {
  if (predicted.size() != gold.size()) invalid("prediction and gold slot counts differ");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const FpTag p = predicted[i], g = gold[i];
    if (p.cls >= per_class.size() || g.cls >= per_class.size()) invalid("tag class outside the evaluated tag space");
    ++slots;
    ++gold_class_counts[g.cls];

    if (p.is_fp() && g.is_fp()) ++position.tp;
    else if (p.is_fp()) ++position.fp;
    else if (g.is_fp()) ++position.fn;
    else ++position.tn;

    for (std::size_t c = 0; c < per_class.size(); ++c) {
      const bool pc = p.cls == c, gc = g.cls == c;
      auto& k = per_class[c];
      if (pc && gc) ++k.tp;
      else if (pc) ++k.fp;
      else if (gc) ++k.fn;
      else ++k.tn;
    }
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.per_class.size() != per_class.size()) invalid("cannot merge confusion counts over different tag spaces");
  position += other.position;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per_class[c] += other.per_class[c];
    gold_class_counts[c] += other.gold_class_counts[c];
  }
  slots += other.slots;
  return *this;
}

void ConfusionCounts::check() const {
  if (position.total() != slots) fail(ErrorKind::Runtime, "position confusion counts do not cover every slot");
  for (const auto& k : per_class)
    if (k.total() != slots) fail(ErrorKind::Runtime, "per-class confusion counts do not cover every slot");
}

Metrics position_metrics(std::span<const std::vector<FpTag>> predicted, std::span<const std::vector<FpTag>> gold) {
  return metrics_from(confusion_of(predicted, gold, class_span(predicted, gold, 1)).position);
}

std::vector<WordScore> per_word_metrics(std::span<const std::vector<FpTag>> predicted, std::span<const std::vector<FpTag>> gold,
                                        const FpVocabulary& vocabulary) {
  const auto counts = confusion_of(predicted, gold, vocabulary.class_count());
  return report_from_counts(counts, vocabulary).per_word;
}

WeightedAverage weighted_word_average(std::span<const WordScore> per_word) {
  WeightedAverage out;
  double total = 0.0;
  for (const auto& w : per_word) {
    const double n = static_cast<double>(w.gold_count);
    total += n;
    out.metrics.precision += n * w.metrics.precision;
    out.metrics.recall += n * w.metrics.recall;
    out.metrics.f += n * w.metrics.f;
    out.metrics.specificity += n * w.metrics.specificity;
  }
  if (total == 0.0) return {Metrics{}, true};
  out.metrics.precision /= total;
  out.metrics.recall /= total;
  out.metrics.f /= total;
  out.metrics.specificity /= total;
  return out;
}

MetricsReport report_from_counts(const ConfusionCounts& counts, const FpVocabulary& vocabulary) {
  if (counts.per_class.size() != vocabulary.class_count()) invalid("confusion counts do not match the vocabulary");
  counts.check();
  MetricsReport r;
  r.position = metrics_from(counts.position);
  for (std::size_t w = 0; w < vocabulary.size(); ++w)
    r.per_word.push_back({vocabulary.words()[w], metrics_from(counts.per_class[w + 1]), counts.gold_class_counts[w + 1]});
  const auto avg = weighted_word_average(r.per_word);
  r.word_weighted = avg.metrics;
  r.no_gold_fps = avg.no_gold_fps;
  r.slots = counts.slots;
  r.gold_fps = counts.position.tp + counts.position.fn;
  return r;
}

MetricsReport mean_report(std::span<const MetricsReport> reports) {
  if (reports.empty()) invalid("no reports to average");
  auto add = [](Metrics& acc, const Metrics& m) {
    acc.precision += m.precision;
    acc.recall += m.recall;
    acc.f += m.f;
    acc.specificity += m.specificity;
  };
  auto scale = [](Metrics& m, double k) {
    m.precision *= k;
    m.recall *= k;
    m.f *= k;
    m.specificity *= k;
  };

  MetricsReport out;
  out.per_word = reports.front().per_word;
  for (auto& w : out.per_word) {
    w.metrics = {};
    w.gold_count = 0;
  }
  out.no_gold_fps = true;
  for (const auto& r : reports) {
    if (r.per_word.size() != out.per_word.size()) invalid("cannot average reports over different vocabularies");
    add(out.position, r.position);
    add(out.word_weighted, r.word_weighted);
    for (std::size_t w = 0; w < r.per_word.size(); ++w) {
      add(out.per_word[w].metrics, r.per_word[w].metrics);
      out.per_word[w].gold_count += r.per_word[w].gold_count;
    }
    out.no_gold_fps = out.no_gold_fps && r.no_gold_fps;
    out.slots += r.slots;
    out.gold_fps += r.gold_fps;
  }
  const double k = 1.0 / static_cast<double>(reports.size());
  scale(out.position, k);
  scale(out.word_weighted, k);
  for (auto& w : out.per_word) scale(w.metrics, k);
  return out;
}

Predictor model_predictor(const TaggerModel& model) {
  return [&model](const Sentence& s, const SentenceKey& key) { return predict_tags(model, s, key); };
}

ConfusionCounts confusion_over(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const Predictor& predict) {
  ConfusionCounts counts(corpus.vocabulary.class_count());
  for (const auto& key : selection) {
    const auto& sentences = corpus.sentences_of(key.speaker);
    if (key.index >= sentences.size()) invalid("speaker \"" + key.speaker + "\" has no sentence " + std::to_string(key.index));
    const auto& s = sentences[key.index];
    counts.add(predict(s, key), s.fp_tags);
  }
  return counts;
}

MetricsReport evaluate(const AnnotatedCorpus& corpus, const SentenceSelection& selection, const Predictor& predict) {
  return report_from_counts(confusion_over(corpus, selection, predict), corpus.vocabulary);
}

MetricsReport evaluate_model(const Checkpoint& ckpt, const AnnotatedCorpus& corpus, const SentenceSelection& selection) {
  if (ckpt.vocabulary != corpus.vocabulary) invalid("checkpoint vocabulary does not match the evaluation corpus");
  return evaluate(corpus, selection, model_predictor(ckpt.model));
}

MetricsReport evaluate_model(const Checkpoint& ckpt, const AnnotatedCorpus& corpus) {
  return evaluate_model(ckpt, corpus, all_sentences(corpus));
}

CvReport aggregate_folds(std::vector<MetricsReport> folds) {
  CvReport out;
  out.mean = mean_report(folds);
  out.folds = std::move(folds);
  return out;
}

std::vector<WordScore> per_fp_breakdown(const MetricsReport& report) {
  auto rows = report.per_word;
  std::stable_sort(rows.begin(), rows.end(), [](const WordScore& a, const WordScore& b) {
    if (a.gold_count != b.gold_count) return a.gold_count > b.gold_count;
    return a.word < b.word;
  });
  return rows;
}

std::vector<SpeakerScore> per_speaker_distribution(const AnnotatedCorpus& corpus, const SentenceSelection& selection,
                                                   const Predictor& predict) {
  std::map<std::string, SentenceSelection> by_speaker;
  for (const auto& key : selection) {
    corpus.sentences_of(key.speaker);  // rejects unknown speakers
    by_speaker[key.speaker].push_back(key);
  }
  std::vector<SpeakerScore> out;
  for (const auto& [speaker, keys] : by_speaker) out.push_back({speaker, evaluate(corpus, keys, predict)});
  return out;
}

nlohmann::ordered_json to_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f", m.f}, {"specificity", m.specificity}};
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["position"] = to_json(report.position);
  j["word_weighted"] = to_json(report.word_weighted);
  nlohmann::ordered_json words = nlohmann::ordered_json::array();
  for (const auto& w : report.per_word) {
    auto row = to_json(w.metrics);
    row["word"] = w.word;
    row["gold_count"] = w.gold_count;
    words.push_back(std::move(row));
  }
  j["per_word"] = std::move(words);
  j["no_gold_fps"] = report.no_gold_fps;
  j["slots"] = report.slots;
  j["gold_fps"] = report.gold_fps;
  return j;
}

nlohmann::ordered_json to_json(const CvReport& report) {
  nlohmann::ordered_json j;
  j["mean"] = to_json(report.mean);
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) folds.push_back(to_json(f));
  j["folds"] = std::move(folds);
  return j;
}

std::string breakdown_csv(std::span<const WordScore> rows) {
  std::ostringstream out;
  out << "key,precision,recall,f,specificity,gold_count\n";
  for (const auto& r : rows) csv_row(out, r.word, r.metrics, r.gold_count);
  return out.str();
}

std::string speaker_csv(std::span<const SpeakerScore> rows, bool word_weighted) {
  std::ostringstream out;
  out << "key,precision,recall,f,specificity,gold_count\n";
  for (const auto& r : rows)
    csv_row(out, r.speaker, word_weighted ? r.report.word_weighted : r.report.position, r.report.gold_fps);
  return out.str();
}

std::string format_report(const MetricsReport& report, const std::string& title) {
  std::ostringstream out;
  char line[160];
  out << title << '\n';
  std::snprintf(line, sizeof line, "  %-16s %10s %10s %10s %12s %8s\n", "criterion", "precision", "recall", "f", "specificity", "gold");
  out << line;
  auto row = [&](const std::string& name, const Metrics& m, std::size_t gold) {
    std::snprintf(line, sizeof line, "  %-16s %10.3f %10.3f %10.3f %12.3f %8zu\n", name.c_str(), m.precision, m.recall, m.f,
                  m.specificity, gold);
    out << line;
  };
  row("position", report.position, report.gold_fps);
  row("word (weighted)", report.word_weighted, report.gold_fps);
  for (const auto& w : per_fp_breakdown(report)) row("  " + w.word, w.metrics, w.gold_count);
  if (report.no_gold_fps) out << "  warning: no gold FPs in the evaluated slice; word scores are 0\n";
  return out.str();
}

}  // namespace fpp
