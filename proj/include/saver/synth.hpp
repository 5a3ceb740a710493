#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saver/dataset.hpp"

namespace saver {

// Synthetic worlds pair a dataset with exact per-unit ground truth so the
// probabilistic calibration guarantee can be checked against known error
// probabilities rather than re-simulation.
struct WorldConfig {
  std::size_t n_samples = 50;
  std::size_t units_per_sample = 5;
  std::size_t min_images = 2;
  std::size_t max_images = 5;
  std::size_t dim = 16;
  double groundable_fraction = 0.7;
  double noise_scale = 0.15;
  double relevance_gap = 0.6;
  double error_rate_groundable = 0.02;
  double error_rate_ungroundable = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct UnitTruth {
  std::string sample_id;
  std::size_t unit_index = 0;
  bool groundable = false;
  double error_prob = 0.0;  // downstream loss probability when activated
  int loss = 0;             // one Bernoulli(error_prob) draw, seed-stable
  double gate_score = 0.0;  // reference gate score from the world geometry
  int gold = 0;
};

struct World {
  std::vector<Sample> samples;
  std::vector<UnitTruth> truth;  // one entry per unit, sample order
};

// Deterministic given the seed. Groundable units carry query vectors aligned
// with a topic shared by useful images; samples mix useful, redundant
// (duplicate) and misleading (anti-aligned) images. The span tokens equal the
// unit query vector so an averaging span projection recovers it exactly.
World generate_world(const WorldConfig& cfg);

// header, when non-empty, is written verbatim as the first line; readers
// skip records carrying a "saver_manifest" key.
void write_truth(const std::vector<UnitTruth>& truth, const std::string& path,
                 const std::string& header = "");
std::vector<UnitTruth> read_truth(const std::string& path);

struct MonteCarloReport {
  std::size_t runs = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;
  double mean_coverage = 0.0;         // calibrated coverage, averaged
  double mean_oracle_coverage = 0.0;  // best coverage with true risk <= alpha
  double mean_true_risk = 0.0;        // over activated test units
};

// Repeats: generate a world, split units i.i.d. into calibration and test
// halves, calibrate tau on sampled losses, then evaluate the TRUE activated
// risk on the test half from the recorded error probabilities. Runs execute
// in parallel, one derived seed per run.
MonteCarloReport monte_carlo_calibration_check(const WorldConfig& cfg,
                                               double alpha, double delta,
                                               std::size_t runs);

}  // namespace saver
