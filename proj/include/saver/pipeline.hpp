#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "saver/dataset.hpp"
#include "saver/gate.hpp"
#include "saver/metrics.hpp"
#include "saver/scoring.hpp"
#include "saver/selector.hpp"
#include "saver/set_encoder.hpp"

namespace saver {

enum class TaskMode { Mner, Mre };

// All loadable weights of the routed model: span/pair projections, fusion
// heads, set encoder, scoring heads and the gate.
struct PipelineModel {
  std::size_t token_dim = 0;
  std::size_t common_dim = 0;  // projected query/evidence dim d_c
  ProjectionHead span_proj;    // 3d -> d
  ProjectionHead ent_proj;     // d -> d_c
  ProjectionHead pair_proj;    // (2d+3) -> d_c
  ProjectionHead fuse_span;    // (d + d_c) -> d
  ProjectionHead fuse_pair;    // (2d+3 + d_c) -> (2d+3)
  SetEncoderWeights set_encoder;
  ScoringHeads heads;
  GateModel gate;

  std::size_t pair_dim() const { return 2 * token_dim + 3; }

  // Reproducible pseudo-random initialization; the span projection averages
  // [start; end; mean] so worlds that plant the query vector in the span
  // tokens expose it exactly.
  static PipelineModel seeded(std::size_t token_dim, std::size_t common_dim,
                              std::size_t n_types, std::size_t n_relations,
                              std::uint64_t seed);
};

struct PipelineConfig {
  TaskMode mode = TaskMode::Mner;
  double tau = std::numeric_limits<double>::infinity();
  std::size_t budget_k = 2;
  std::size_t k_regions = 3;
  SisWeights sis;
  CostConfig cost;
  std::size_t jobs = 1;
};

struct RoutedUnitTrace {
  std::size_t unit_index = 0;
  double g = 0.0;
  int gamma = 0;
  std::vector<std::string> chosen_images;
  double consis = 0.0;
  double eta = 0.0;
  // Span units: decoded validity/type for this candidate. Pair units: the
  // predicted relation.
  int predicted_delta = 0;
  int predicted_label = -1;
  std::size_t region_reads = 0;
};

struct SampleResult {
  std::string sample_id;
  EntityPrediction entities;       // mner
  std::vector<int> relations;      // mre, one per pair unit
  std::vector<RoutedUnitTrace> traces;
  double gamma_bar = 0.0;
  double measured_cost = 0.0;      // invocation-counted, CostConfig-weighted
};

SampleResult route_sample(const Sample& sample, const PipelineModel& model,
                          const PipelineConfig& cfg);

std::vector<SampleResult> route_dataset(const std::vector<Sample>& samples,
                                        const PipelineModel& model,
                                        const PipelineConfig& cfg);

// Force the gate on for every unit, run the full visual path, and emit the
// (gate score, binary downstream loss) pairs the calibration step consumes.
// MNER loss: 1{delta_hat != delta or (delta = 1 and y_hat != y)}; MRE loss:
// 1{r_hat != r}.
std::vector<std::pair<double, int>> record_forced_on_losses(
    const std::vector<Sample>& samples, const PipelineModel& model,
    const PipelineConfig& cfg);

}  // namespace saver
