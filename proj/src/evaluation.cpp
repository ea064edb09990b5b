#include "tgeacm/evaluation.hpp"

#include <algorithm>
#include <istream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace tgeacm {

double bleu_from_stats(const BleuStats& stats, int max_order) {
  if (stats.hyp_length == 0) return 0.0;
  double log_precision = 0.0;
  for (int k = 0; k < max_order; ++k) {
    const auto m = static_cast<double>(stats.matches[static_cast<std::size_t>(k)]);
    const auto t = static_cast<double>(stats.totals[static_cast<std::size_t>(k)]);
    const double p = m > 0.0 ? m / t : 1.0 / (t + 1.0);
    log_precision += std::log(p) / max_order;
  }
  const auto c = static_cast<double>(stats.hyp_length);
  const auto r = static_cast<double>(stats.ref_length);
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return brevity * std::exp(log_precision);
}

int response_quality(int semantic, int emotion) {
  if ((semantic != 0 && semantic != 1) || (emotion != 0 && emotion != 1))
    throw InvalidInput("human scores must be 0 or 1");
  return semantic & emotion;
}

std::vector<HumanScore> read_human_scores(std::istream& in) {
  std::vector<HumanScore> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() < 3 || cells[0] != "id" || cells[1] != "semantic" || cells[2] != "emotion")
        throw FormatError("human scores: header must start with id,semantic,emotion");
      continue;
    }
    if (cells.size() < 3) throw FormatError("human scores line " + std::to_string(line_no) + ": expected 3 columns");
    auto binary = [&](const std::string& s) {
      if (s == "0") return 0;
      if (s == "1") return 1;
      throw InvalidInput("human scores line " + std::to_string(line_no) + ": '" + s + "' is not 0 or 1");
    };
    rows.push_back(HumanScore{cells[0], binary(cells[1]), binary(cells[2])});
  }
  return rows;
}

HumanSummary summarize_human_scores(const std::vector<HumanScore>& rows) {
  if (rows.empty()) throw UndefinedMetric("no human scores");
  std::map<std::string, std::vector<const HumanScore*>> by_id;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!by_id.count(r.id)) order.push_back(r.id);
    by_id[r.id].push_back(&r);
  }
  HumanSummary s;
  s.items = order.size();
  std::set<std::size_t> rater_counts;
  for (const auto& [id, v] : by_id) rater_counts.insert(v.size());
  s.raters = rater_counts.size() == 1 ? *rater_counts.begin() : 0;

  std::vector<std::vector<int>> sem_table, emo_table;
  for (const auto& id : order) {
    const auto& ratings = by_id[id];
    int sem = 0, emo = 0;
    for (const auto* r : ratings) {
      sem += r->semantic;
      emo += r->emotion;
    }
    const int n = static_cast<int>(ratings.size());
    const int sem_major = 2 * sem > n ? 1 : 0;
    const int emo_major = 2 * emo > n ? 1 : 0;
    s.semantic += sem_major;
    s.emotion += emo_major;
    s.quality += response_quality(sem_major, emo_major);
    sem_table.push_back({n - sem, sem});
    emo_table.push_back({n - emo, emo});
  }
  const auto items = static_cast<double>(s.items);
  s.semantic /= items;
  s.emotion /= items;
  s.quality /= items;
  if (s.raters >= 2) {
    s.kappa_semantic = fleiss_kappa(sem_table);
    s.kappa_emotion = fleiss_kappa(emo_table);
  }
  return s;
}

double fleiss_kappa(const std::vector<std::vector<int>>& ratings) {
  if (ratings.empty()) throw UndefinedMetric("Fleiss' kappa over zero items");
  const std::size_t categories = ratings.front().size();
  long raters = -1;
  for (const auto& row : ratings) {
    if (row.size() != categories) throw InvalidInput("Fleiss' kappa: rows have different category counts");
    long sum = 0;
    for (int c : row) {
      if (c < 0) throw InvalidInput("Fleiss' kappa: negative rater count");
      sum += c;
    }
    if (raters < 0) raters = sum;
    if (sum != raters) throw InvalidInput("Fleiss' kappa: items have different rater counts");
  }
  if (raters < 2) throw InvalidInput("Fleiss' kappa needs at least two raters per item");

  const auto n = static_cast<double>(raters);
  const auto items = static_cast<double>(ratings.size());
  double p_bar = 0.0;
  std::vector<double> category_share(categories, 0.0);
  for (const auto& row : ratings) {
    double agree = 0.0;
    for (std::size_t j = 0; j < categories; ++j) {
      agree += static_cast<double>(row[j]) * (row[j] - 1);
      category_share[j] += row[j];
    }
    p_bar += agree / (n * (n - 1.0));
  }
  p_bar /= items;
  double p_e = 0.0;
  for (double share : category_share) {
    const double p = share / (items * n);
    p_e += p * p;
  }
  if (p_e >= 1.0) {
    if (p_bar >= 1.0) return 1.0;
    throw UndefinedMetric("Fleiss' kappa: chance agreement is 1 but observed agreement is not");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

double emotion_accuracy(const std::vector<EmotionVector>& predictions, const std::vector<EmotionVector>& golds,
                        AccuracyMode mode) {
  if (predictions.size() != golds.size()) throw InvalidInput("emotion_accuracy: length mismatch");
  if (predictions.empty()) throw UndefinedMetric("emotion accuracy over zero predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = golds[i];
    if (mode == AccuracyMode::ArgmaxInGold) {
      const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      correct += g[best] == 1.0 ? 1 : 0;
    } else {
      bool all = true;
      for (std::size_t k = 0; k < p.size(); ++k) all = all && ((p[k] >= 0.5) == (g[k] == 1.0));
      correct += all ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

PcaProjection pca_project(const Mat& data, int dims) {
  if (data.rows() < 2) throw InvalidInput("PCA needs at least two samples");
  if (dims < 1) throw InvalidInput("PCA needs at least one output dimension");
  PcaProjection out;
  out.mean = data.colwise().mean().transpose();
  out.mean += (data.rowwise() - out.mean.transpose()).colwise().mean().transpose();  // second pass
  const Mat centered = data.rowwise() - out.mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
  const Vec& evals = solver.eigenvalues();  // ascending
  const Mat& evecs = solver.eigenvectors();
  const Eigen::Index features = data.cols();

  out.components = Mat::Zero(features, dims);
  out.variances = Vec::Zero(dims);
  for (int k = 0; k < dims && k < features; ++k) {
    const Eigen::Index src = features - 1 - k;
    Vec axis = evecs.col(src);
    for (Eigen::Index i = 0; i < axis.size(); ++i)
      if (std::abs(axis(i)) > 1e-12) {
        if (axis(i) < 0) axis = -axis;
        break;
      }
    out.components.col(k) = axis;
    out.variances(k) = std::max(evals(src), 0.0);
  }
  out.coords = centered * out.components;
  return out;
}

}  // namespace tgeacm
