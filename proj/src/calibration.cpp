#include "saver/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "saver/errors.hpp"

namespace saver {

double binom_cdf(std::size_t k, std::size_t n, double p) {
  if (p < 0.0 || p > 1.0) throw contract_error("binom_cdf: p out of [0,1]");
  if (k > n) throw contract_error("binom_cdf: k > n");
  if (p == 0.0) return 1.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  double sum = 0.0;
  for (std::size_t j = 0; j <= k; ++j) {
    double lc = std::lgamma(static_cast<double>(n) + 1.0) -
                std::lgamma(static_cast<double>(j) + 1.0) -
                std::lgamma(static_cast<double>(n - j) + 1.0);
    sum += std::exp(lc + static_cast<double>(j) * lp +
                    static_cast<double>(n - j) * lq);
  }
  return std::min(sum, 1.0);
}

double cp_upper(std::size_t k, std::size_t n, double confidence) {
  if (n == 0) throw contract_error("cp_upper: n must be >= 1");
  if (k > n) throw contract_error("cp_upper: k > n");
  if (confidence <= 0.0 || confidence >= 1.0)
    throw contract_error("cp_upper: confidence must be in (0,1)");
  if (k == n) return 1.0;
  const double delta = 1.0 - confidence;
  // binom_cdf(k, n, p) decreases in p; bisect for the crossing with delta.
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    if (binom_cdf(k, n, mid) <= delta)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

CalibrationResult calibrate_threshold(const CalibrationInput& input) {
  if (input.scores.size() != input.losses.size())
    throw contract_error("calibrate_threshold: scores/losses length mismatch");
  if (input.alpha <= 0.0 || input.alpha >= 1.0 || input.delta <= 0.0 ||
      input.delta >= 1.0)
    throw contract_error("calibrate_threshold: alpha, delta must be in (0,1)");

  const std::size_t total = input.scores.size();
  CalibrationResult best;
  if (total == 0) return best;

  // Sort units by score descending; distinct scores are the candidate
  // thresholds and activated sets are exactly the distinct prefixes.
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return input.scores[a] > input.scores[b];
  });

  const double confidence = 1.0 - input.delta;
  std::size_t k = 0;
  std::size_t i = 0;
  while (i < total) {
    double tau = input.scores[order[i]];
    // Consume the whole tie group at this score.
    while (i < total && input.scores[order[i]] == tau) {
      k += input.losses[order[i]] ? 1 : 0;
      ++i;
    }
    const std::size_t n = i;
    double bound = cp_upper(k, n, confidence);
    if (bound <= input.alpha) {
      // Larger prefixes have larger coverage; keep the latest feasible one.
      best.tau = tau;
      best.n = n;
      best.k = k;
      best.cp_bound = bound;
      best.coverage = static_cast<double>(n) / static_cast<double>(total);
      best.feasible = true;
    }
  }
  return best;
}

}  // namespace saver
