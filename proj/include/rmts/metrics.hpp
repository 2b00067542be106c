#ifndef RMTS_METRICS_HPP_
#define RMTS_METRICS_HPP_

#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace rmts {

struct DatasetSpec;

struct QwkResult {
  double kappa = 0.0;
  int n = 0;
  double label_min = 0.0;
  double label_max = 0.0;
  double step = 1.0;
  // Both marginals concentrated on the same single label: expected
  // disagreement is zero and kappa is reported as 1 (0 if observed
  // agreement were somehow not concentrated there too).
  bool degenerate = false;
};

// Quadratic weighted kappa on an ordinal grid. Labels are mapped to
// indices 0..K-1; w_ij = (i-j)^2 / (K-1)^2; kappa = 1 - sum(wO)/sum(wE)
// with O the normalized confusion matrix and E the outer product of its
// marginals.
QwkResult qwk(const std::vector<double>& gold, const std::vector<double>& pred,
              double label_min, double label_max, double step);

enum class RougeVariant { rouge_1, rouge_2, rouge_l };

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  RougeVariant variant = RougeVariant::rouge_l;
};

// rouge_l: LCS-based; rouge_1/rouge_2: clipped n-gram overlap. Empty
// candidate or reference yields all zeros.
RougeScore rouge(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference, RougeVariant variant);

// Default ROUGE preprocessing: lowercase + whitespace tokenization.
std::vector<std::string> rouge_tokenize(const std::string& s, bool lowercase = true);

struct CheckpointRun {
  long step = 0;  // training step; breaks dev ties (earlier wins)
  double dev_qwk = 0.0;
  double test_qwk = 0.0;
};

// Model-selection rule: take the two checkpoints with the highest dev QWK
// (ties broken by earlier step) and report the larger of their test QWKs.
double select_checkpoint(const std::vector<CheckpointRun>& fold_runs);

// (prompt_id, trait, fold) -> result
using CellKey = std::tuple<int, std::string, int>;
using CellMap = std::map<CellKey, QwkResult>;

struct AggregateReport {
  std::map<std::string, double> per_trait;   // mean across prompts (fold-mean cells)
  std::map<int, double> per_prompt;          // mean across traits
  double avg = 0.0;                          // mean of per_trait values
  double fold_sd = 0.0;                      // mean across-fold population SD
};

// Means are computed only over cells whose trait belongs to the prompt's
// declared inventory; any other cell is an error.
AggregateReport aggregate(const CellMap& cells, const DatasetSpec& spec);

}  // namespace rmts

#endif  // RMTS_METRICS_HPP_
