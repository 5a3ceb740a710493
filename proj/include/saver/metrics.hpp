#pragma once

#include <cstddef>
#include <vector>

#include "saver/scoring.hpp"

namespace saver {

struct RiskCoveragePoint {
  double coverage = 0.0;  // i / n for the top-i prefix
  double risk = 0.0;      // mean loss over the prefix
};

struct RiskCoverageCurve {
  std::vector<RiskCoveragePoint> points;  // one per unit, coverage increasing
};

// Sort by score descending (ties by original index ascending); point i is the
// prefix of the top i+1 units.
RiskCoverageCurve risk_coverage(const std::vector<double>& scores,
                                const std::vector<int>& losses);

// Mean of the prefix risks.
double aurc(const RiskCoverageCurve& curve);

// Largest coverage whose prefix risk is <= alpha; 0 when none qualifies.
double act_cov_at(const RiskCoverageCurve& curve, double alpha);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Strict match on (a, b, type). Empty prediction against empty gold scores
// (1, 1, 1).
PrecisionRecallF1 entity_f1(const EntityPrediction& pred,
                            const EntityPrediction& gold);

// Micro-averaged over non-null labels; null_id predictions and golds do not
// count as TP and do not enter the respective denominators.
PrecisionRecallF1 relation_micro_f1(const std::vector<int>& preds,
                                    const std::vector<int>& golds,
                                    int null_id = 0);

struct CostConfig {
  double f_text = 0.0;
  double f_vglob = 0.0;
  double f_vreg_per_k = 0.0;
  double f_fuse_per_k = 0.0;
  double f_head = 0.0;
};

// f_text + f_vglob + gamma_bar * K * (f_vreg_per_k + f_fuse_per_k) + f_head.
double estimate_cost(const CostConfig& cfg, double gamma_bar, std::size_t k);

}  // namespace saver
