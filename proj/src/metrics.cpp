#include "rmts/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "rmts/corpus.hpp"
#include "rmts/errors.hpp"
#include "rmts/text.hpp"

namespace rmts {

namespace {

int to_index(double v, double label_min, double label_max, double step) {
  if (v < label_min || v > label_max)
    throw ValidationError("label " + std::to_string(v) + " outside [" +
                          std::to_string(label_min) + ", " +
                          std::to_string(label_max) + "]");
  double steps = (v - label_min) / step;
  double r = std::round(steps);
  if (std::abs(steps - r) > 1e-9)
    throw ValidationError("label " + std::to_string(v) + " is off the grid");
  return static_cast<int>(r);
}

}  // namespace

QwkResult qwk(const std::vector<double>& gold, const std::vector<double>& pred,
              double label_min, double label_max, double step) {
  if (gold.empty()) throw ValidationError("qwk: empty input");
  if (gold.size() != pred.size())
    throw ValidationError("qwk: gold/pred length mismatch");
  if (!(label_min < label_max) || !(step > 0))
    throw ValidationError("qwk: invalid label range");

  const int k = to_index(label_max, label_min, label_max, step) + 1;
  const std::size_t n = gold.size();

  std::vector<std::vector<double>> observed(k, std::vector<double>(k, 0.0));
  std::vector<double> gold_marginal(k, 0.0), pred_marginal(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int g = to_index(gold[i], label_min, label_max, step);
    int p = to_index(pred[i], label_min, label_max, step);
    observed[g][p] += 1.0;
    gold_marginal[g] += 1.0;
    pred_marginal[p] += 1.0;
  }
  for (auto& row : observed)
    for (auto& v : row) v /= static_cast<double>(n);
  for (auto& v : gold_marginal) v /= static_cast<double>(n);
  for (auto& v : pred_marginal) v /= static_cast<double>(n);

  const double denom_w = (k - 1) > 0 ? static_cast<double>((k - 1) * (k - 1)) : 1.0;
  double wo = 0.0, we = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double w = static_cast<double>((i - j) * (i - j)) / denom_w;
      wo += w * observed[i][j];
      we += w * gold_marginal[i] * pred_marginal[j];
    }
  }

  QwkResult result;
  result.n = static_cast<int>(n);
  result.label_min = label_min;
  result.label_max = label_max;
  result.step = step;
  if (we == 0.0) {
    result.degenerate = true;
    result.kappa = (wo == 0.0) ? 1.0 : 0.0;
  } else {
    result.kappa = 1.0 - wo / we;
  }
  return result;
}

std::vector<std::string> rouge_tokenize(const std::string& s, bool lowercase) {
  return text::whitespace_tokens(lowercase ? text::lowercase(s) : s);
}

namespace {

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  // Two-row DP.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t clipped_ngram_overlap(const std::vector<std::string>& cand,
                                  const std::vector<std::string>& ref,
                                  std::size_t n, std::size_t& cand_total,
                                  std::size_t& ref_total) {
  cand_total = cand.size() >= n ? cand.size() - n + 1 : 0;
  ref_total = ref.size() >= n ? ref.size() - n + 1 : 0;
  if (cand_total == 0 || ref_total == 0) return 0;
  std::map<std::string, std::size_t> ref_counts;
  for (std::size_t i = 0; i + n <= ref.size(); ++i) {
    std::string g = ref[i];
    for (std::size_t j = 1; j < n; ++j) g += "\x1f" + ref[i + j];
    ++ref_counts[g];
  }
  std::size_t match = 0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    std::string g = cand[i];
    for (std::size_t j = 1; j < n; ++j) g += "\x1f" + cand[i + j];
    auto it = ref_counts.find(g);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++match;
    }
  }
  return match;
}

}  // namespace

RougeScore rouge(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference, RougeVariant variant) {
  RougeScore score;
  score.variant = variant;

  double p = 0.0, r = 0.0;
  if (variant == RougeVariant::rouge_l) {
    if (!candidate.empty() && !reference.empty()) {
      double l = static_cast<double>(lcs_length(candidate, reference));
      p = l / static_cast<double>(candidate.size());
      r = l / static_cast<double>(reference.size());
    }
  } else {
    std::size_t n = variant == RougeVariant::rouge_1 ? 1 : 2;
    std::size_t cand_total = 0, ref_total = 0;
    std::size_t match = clipped_ngram_overlap(candidate, reference, n, cand_total, ref_total);
    if (cand_total > 0) p = static_cast<double>(match) / static_cast<double>(cand_total);
    if (ref_total > 0) r = static_cast<double>(match) / static_cast<double>(ref_total);
  }
  score.precision = p;
  score.recall = r;
  score.f1 = (p > 0.0 && r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  return score;
}

double select_checkpoint(const std::vector<CheckpointRun>& fold_runs) {
  if (fold_runs.empty())
    throw ValidationError("select_checkpoint: empty run list");
  std::vector<CheckpointRun> sorted = fold_runs;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CheckpointRun& a, const CheckpointRun& b) {
                     if (a.dev_qwk != b.dev_qwk) return a.dev_qwk > b.dev_qwk;
                     return a.step < b.step;
                   });
  std::size_t take = std::min<std::size_t>(2, sorted.size());
  double best = sorted[0].test_qwk;
  for (std::size_t i = 1; i < take; ++i) best = std::max(best, sorted[i].test_qwk);
  return best;
}

AggregateReport aggregate(const CellMap& cells, const DatasetSpec& spec) {
  // (prompt, trait) -> per-fold kappas
  std::map<std::pair<int, std::string>, std::vector<double>> grouped;
  for (const auto& [key, result] : cells) {
    const auto& [prompt_id, trait, fold] = key;
    const PromptSpec& ps = spec.prompt(prompt_id);
    if (!ps.has_trait(trait))
      throw ValidationError("aggregate: trait '" + trait + "' is not in prompt " +
                            std::to_string(prompt_id) + "'s inventory");
    grouped[{prompt_id, trait}].push_back(result.kappa);
  }
  if (grouped.empty()) throw ValidationError("aggregate: no cells");

  AggregateReport report;
  std::map<std::string, std::vector<double>> trait_means;
  std::map<int, std::vector<double>> prompt_means;
  double sd_sum = 0.0;
  for (const auto& [key, kappas] : grouped) {
    double mean = 0.0;
    for (double v : kappas) mean += v;
    mean /= static_cast<double>(kappas.size());
    double var = 0.0;
    for (double v : kappas) var += (v - mean) * (v - mean);
    var /= static_cast<double>(kappas.size());  // population SD
    sd_sum += std::sqrt(var);
    trait_means[key.second].push_back(mean);
    prompt_means[key.first].push_back(mean);
  }
  for (const auto& [trait, means] : trait_means) {
    double m = 0.0;
    for (double v : means) m += v;
    report.per_trait[trait] = m / static_cast<double>(means.size());
  }
  for (const auto& [prompt_id, means] : prompt_means) {
    double m = 0.0;
    for (double v : means) m += v;
    report.per_prompt[prompt_id] = m / static_cast<double>(means.size());
  }
  double avg = 0.0;
  for (const auto& [trait, v] : report.per_trait) avg += v;
  report.avg = avg / static_cast<double>(report.per_trait.size());
  report.fold_sd = sd_sum / static_cast<double>(grouped.size());
  return report;
}

}  // namespace rmts
