#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace saver {

// Lower regularized binomial tail: P(Bin(n, p) <= k), log-space terms.
double binom_cdf(std::size_t k, std::size_t n, double p);

// Exact Clopper-Pearson upper confidence bound: the smallest p with
// P(Bin(n, p) <= k) <= 1 - confidence, bisected to 1e-10. Returns 1 at k = n.
double cp_upper(std::size_t k, std::size_t n, double confidence);

struct CalibrationInput {
  std::vector<double> scores;  // g(u) per calibration unit
  std::vector<int> losses;     // forced-on binary loss per unit
  double alpha = 0.10;
  double delta = 0.05;         // confidence = 1 - delta
};

struct CalibrationResult {
  double tau = std::numeric_limits<double>::infinity();
  std::size_t n = 0;         // activated count at tau
  std::size_t k = 0;         // errors among activated
  double cp_bound = 1.0;     // CP upper bound at tau
  double coverage = 0.0;     // n / |C|
  bool feasible = false;
};

// Sweep the unique observed scores in descending order; each candidate tau'
// activates {u: g(u) >= tau'}. Return the feasible candidate with maximum
// coverage, i.e. the smallest feasible tau'. Infeasible everywhere -> tau =
// +inf sentinel.
CalibrationResult calibrate_threshold(const CalibrationInput& input);

}  // namespace saver
