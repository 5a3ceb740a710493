#include "saver/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "saver/errors.hpp"

namespace saver {

RiskCoverageCurve risk_coverage(const std::vector<double>& scores,
                                const std::vector<int>& losses) {
  if (scores.size() != losses.size())
    throw contract_error("risk_coverage: scores/losses length mismatch");
  if (scores.empty()) throw contract_error("risk_coverage: empty input");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  RiskCoverageCurve curve;
  curve.points.resize(n);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    errors += losses[order[i]] ? 1 : 0;
    curve.points[i].coverage =
        static_cast<double>(i + 1) / static_cast<double>(n);
    curve.points[i].risk =
        static_cast<double>(errors) / static_cast<double>(i + 1);
  }
  return curve;
}

double aurc(const RiskCoverageCurve& curve) {
  if (curve.points.empty()) throw contract_error("aurc: empty curve");
  double sum = 0.0;
  for (const auto& p : curve.points) sum += p.risk;
  return sum / static_cast<double>(curve.points.size());
}

double act_cov_at(const RiskCoverageCurve& curve, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw contract_error("act_cov_at: alpha must be in (0,1)");
  double best = 0.0;
  for (const auto& p : curve.points)
    if (p.risk <= alpha) best = std::max(best, p.coverage);
  return best;
}

PrecisionRecallF1 entity_f1(const EntityPrediction& pred,
                            const EntityPrediction& gold) {
  if (pred.entities.empty() && gold.entities.empty()) return {1.0, 1.0, 1.0};
  std::size_t tp = 0;
  for (const auto& p : pred.entities)
    for (const auto& g : gold.entities)
      if (p == g) {
        ++tp;
        break;
      }
  PrecisionRecallF1 out;
  out.precision = pred.entities.empty()
                      ? 0.0
                      : static_cast<double>(tp) / pred.entities.size();
  out.recall = gold.entities.empty()
                   ? 0.0
                   : static_cast<double>(tp) / gold.entities.size();
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

PrecisionRecallF1 relation_micro_f1(const std::vector<int>& preds,
                                    const std::vector<int>& golds,
                                    int null_id) {
  if (preds.size() != golds.size())
    throw contract_error("relation_micro_f1: length mismatch");
  std::size_t tp = 0, pred_nn = 0, gold_nn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != null_id) ++pred_nn;
    if (golds[i] != null_id) ++gold_nn;
    if (preds[i] != null_id && preds[i] == golds[i]) ++tp;
  }
  if (pred_nn == 0 && gold_nn == 0) return {1.0, 1.0, 1.0};
  PrecisionRecallF1 out;
  out.precision = pred_nn ? static_cast<double>(tp) / pred_nn : 0.0;
  out.recall = gold_nn ? static_cast<double>(tp) / gold_nn : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double estimate_cost(const CostConfig& cfg, double gamma_bar, std::size_t k) {
  if (gamma_bar < 0.0 || gamma_bar > 1.0)
    throw contract_error("estimate_cost: gamma_bar outside [0,1]");
  return cfg.f_text + cfg.f_vglob +
         gamma_bar * static_cast<double>(k) *
             (cfg.f_vreg_per_k + cfg.f_fuse_per_k) +
         cfg.f_head;
}

}  // namespace saver
