#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saver/dataset.hpp"

namespace saver {

// Linear heads producing energies (negative logits). span_head scores the
// validity decision delta in {0,1}; type_head scores each entity type;
// rel_head scores each relation.
struct ScoringHeads {
  std::size_t dim = 0;       // h~ dim for span/type
  std::size_t pair_dim = 0;  // u~ dim for relations
  std::vector<double> span_w0, span_w1;  // delta = 0 / 1
  double span_b0 = 0.0, span_b1 = 0.0;
  std::vector<double> type_w;  // n_types x dim, row-major
  std::vector<double> type_b;
  std::vector<double> rel_w;   // n_relations x pair_dim, row-major
  std::vector<double> rel_b;
  double lambda_cons = 1.0;
  double lambda_gate = 1.0;

  std::size_t n_types() const { return type_b.size(); }
  std::size_t n_relations() const { return rel_b.size(); }

  static ScoringHeads seeded(std::size_t dim, std::size_t pair_dim,
                             std::size_t n_types, std::size_t n_relations,
                             std::uint64_t seed);
};

void save_scoring_heads(const ScoringHeads& h, const std::string& path);
ScoringHeads load_scoring_heads(const std::string& path);

constexpr std::size_t kDefaultMaxSpanLength = 10;

// Per-decision energies for one candidate span plus the unit's additive
// consistency and gate-sparsity contribution lambda_cons*eta*(-consis) +
// lambda_gate*eta.
struct UnitEnergies {
  double e_delta0 = 0.0;
  double e_delta1_base = 0.0;          // span head, before the type term
  std::vector<double> e_type;          // typed energies on top of delta=1
  double unit_additive = 0.0;          // consistency + gate terms
  int best_type = 0;
  double best_typed_energy = 0.0;      // e_delta1_base + min type energy
};

UnitEnergies unit_energy_terms(const std::vector<float>& h_tilde, double eta,
                               double consis, const ScoringHeads& heads);

struct CandidateSpan {
  Span span;
  std::vector<float> h_tilde;
  double eta = 0.0;
  double consis = 0.0;
};

struct TypedSpan {
  Span span;
  int type = 0;
  bool operator==(const TypedSpan&) const = default;
};

struct EntityPrediction {
  std::vector<TypedSpan> entities;  // pairwise non-overlapping
};

// Admissible candidates (best typed delta=1 energy strictly below the delta=0
// energy) sorted by total energy ascending, ties by (a, b, type id), then
// accepted greedily subject to non-overlap over inclusive intervals.
EntityPrediction ner_decode(const std::vector<CandidateSpan>& candidates,
                            const ScoringHeads& heads);

// argmin_r of the relation energy; the consistency/gate terms are constant in
// r, so the result depends only on the relation head. Ties to the lowest id.
int re_predict(const std::vector<float>& u_tilde, double eta, double consis,
               const ScoringHeads& heads);

std::vector<double> relation_energies(const std::vector<float>& u_tilde,
                                      double eta, double consis,
                                      const ScoringHeads& heads);

// Total MNER energy of a prediction over the candidate list: selected
// span-validity terms for every candidate, type terms over predicted
// entities, plus each unit's additive contribution.
double total_energy(const std::vector<CandidateSpan>& candidates,
                    const EntityPrediction& prediction,
                    const ScoringHeads& heads);

}  // namespace saver
