#pragma once

// Automatic metrics (distinct-n, corpus BLEU), human-score aggregation,
// Fleiss' kappa, emotion-prediction accuracy and PCA projection.

#include <cmath>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tgeacm/corpus.hpp"
#include "tgeacm/error.hpp"
#include "tgeacm/params.hpp"

namespace tgeacm {

namespace detail {

template <class Tok>
std::map<std::vector<Tok>, long> ngram_counts(const std::vector<Tok>& s, int n) {
  std::map<std::vector<Tok>, long> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++counts[std::vector<Tok>(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i) + n)];
  return counts;
}

}  // namespace detail

// Unique n-grams across the corpus divided by the total n-gram count.
template <class Tok>
double distinct_n(const std::vector<std::vector<Tok>>& responses, int n) {
  if (n < 1) throw InvalidInput("distinct_n: n must be positive");
  std::set<std::vector<Tok>> unique;
  long total = 0;
  for (const auto& r : responses)
    for (const auto& [gram, count] : detail::ngram_counts(r, n)) {
      unique.insert(gram);
      total += count;
    }
  if (total == 0) throw UndefinedMetric("distinct-" + std::to_string(n) + " over a corpus without n-grams");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

// Sufficient statistics for corpus BLEU up to a given order.
struct BleuStats {
  std::vector<long> matches;  // clipped n-gram matches per order
  std::vector<long> totals;   // hypothesis n-grams per order
  long hyp_length = 0;
  long ref_length = 0;
};

template <class Tok>
void accumulate_bleu(BleuStats& stats, const std::vector<Tok>& hyp, const std::vector<Tok>& ref, int max_order) {
  stats.matches.resize(static_cast<std::size_t>(max_order), 0);
  stats.totals.resize(static_cast<std::size_t>(max_order), 0);
  for (int k = 1; k <= max_order; ++k) {
    const auto h = detail::ngram_counts(hyp, k);
    const auto r = detail::ngram_counts(ref, k);
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) stats.matches[static_cast<std::size_t>(k - 1)] += std::min(count, it->second);
      stats.totals[static_cast<std::size_t>(k - 1)] += count;
    }
  }
  stats.hyp_length += static_cast<long>(hyp.size());
  stats.ref_length += static_cast<long>(ref.size());
}

// Uniform weights over orders 1..n; an order without matches uses the
// add-one estimate 1 / (total + 1); brevity penalty exp(1 - r/c) when c < r.
double bleu_from_stats(const BleuStats& stats, int max_order);

template <class Tok>
double bleu_n(const std::vector<std::vector<Tok>>& hypotheses, const std::vector<std::vector<Tok>>& references,
              int n) {
  if (hypotheses.empty()) throw UndefinedMetric("BLEU over an empty corpus");
  if (hypotheses.size() != references.size()) throw InvalidInput("BLEU: hypothesis and reference counts differ");
  if (n < 1 || n > 4) throw InvalidInput("BLEU order must lie in [1, 4]");
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) accumulate_bleu(stats, hypotheses[i], references[i], n);
  return bleu_from_stats(stats, n);
}

int response_quality(int semantic, int emotion);

struct HumanScore {
  std::string id;
  int semantic = 0;
  int emotion = 0;
};

struct HumanSummary {
  std::size_t items = 0;
  std::size_t raters = 0;  // ratings per item (1 when unreplicated)
  double semantic = 0.0;
  double emotion = 0.0;
  double quality = 0.0;
  // Present when every item has the same number (>= 2) of ratings.
  std::optional<double> kappa_semantic;
  std::optional<double> kappa_emotion;
};

// CSV with header "id,semantic,emotion"; rows with a repeated id are
// additional raters. Item scores are the strict majority of their ratings.
std::vector<HumanScore> read_human_scores(std::istream& in);
HumanSummary summarize_human_scores(const std::vector<HumanScore>& rows);

// ratings[i][j] = number of raters assigning item i to category j.
double fleiss_kappa(const std::vector<std::vector<int>>& ratings);

enum class AccuracyMode {
  ArgmaxInGold,  // correct when the argmax category is a gold positive
  ExactAtHalf,   // correct when thresholding at 0.5 reproduces the gold vector
};

double emotion_accuracy(const std::vector<EmotionVector>& predictions, const std::vector<EmotionVector>& golds,
                        AccuracyMode mode = AccuracyMode::ArgmaxInGold);

struct PcaProjection {
  Mat coords;      // (N x dims)
  Vec variances;   // per component, sample variance (N - 1 denominator)
  Mat components;  // (D x dims), unit columns, first nonzero loading positive
  Vec mean;
};

// Rows of `data` are samples.
PcaProjection pca_project(const Mat& data, int dims = 2);

}  // namespace tgeacm
