#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace saver {

// Summary statistics of the query-to-global-image similarity list. The max is
// carried separately from the [mean, std, top-2 mean] block.
struct GateFeatures {
  double psi_max = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;   // population form, defined for N = 1
  double top2_mean = 0.0;
  bool no_image = false;

  std::vector<double> as_vector() const {
    return {psi_max, mean, std_dev, top2_mean};
  }
};

constexpr std::size_t kGateFeatureCount = 4;

// Linear-logistic gate over [h_s; psi_max; mean; std; top2_mean].
struct GateModel {
  std::vector<double> weights;  // length = span dim + kGateFeatureCount
  double bias = 0.0;
  bool degenerate = false;  // fit saw a single class; score is constant

  std::size_t span_dim() const { return weights.size() - kGateFeatureCount; }
};

GateFeatures features_from_similarities(const std::vector<double>& sims);
GateFeatures groundability_features(const std::vector<float>& q,
                                    const std::vector<std::vector<float>>& globals);

double gate_score(const GateModel& model, const std::vector<float>& h_s,
                  const GateFeatures& feats);

inline double pair_gate(double g_head, double g_tail) {
  return g_head > g_tail ? g_head : g_tail;
}

// Boundary inclusive: g == tau activates. tau = +inf is the never-activate
// sentinel.
inline int hard_gate(double g, double tau) { return g >= tau ? 1 : 0; }

struct GateExample {
  std::vector<float> h_s;
  GateFeatures feats;
  int label = 0;  // {0,1}
};

// Deterministic full-batch gradient descent on L2-regularized logistic loss.
// Step size is halved whenever a step would increase the loss, so recorded
// checkpoint losses are non-increasing.
GateModel fit_gate(const std::vector<GateExample>& examples, double l2,
                   std::size_t steps, std::uint64_t seed,
                   std::vector<double>* loss_trace = nullptr);

void save_gate_model(const GateModel& m, const std::string& path);
GateModel load_gate_model(const std::string& path);

}  // namespace saver
