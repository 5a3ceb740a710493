#pragma once

#include <cstddef>
#include <vector>

#include "saver/matrix.hpp"

namespace saver {

// Cosine similarities rescaled into [0,1]: relevance r~ per image and the
// symmetric image-image matrix d~ with unit diagonal.
struct SimilarityBundle {
  std::vector<double> relevance;   // r~, size N
  std::vector<double> cross;       // d~, row-major N x N
  std::size_t n = 0;

  double rel(std::size_t i) const { return relevance[i]; }
  double d(std::size_t i, std::size_t j) const { return cross[i * n + j]; }
};

struct SisWeights {
  double lambda_rel = 1.0;
  double lambda_cov = 1.0;
};

struct EvidenceSelection {
  std::vector<std::size_t> chosen;   // in selection order
  std::vector<double> gains;         // marginal gain per step
  double objective = 0.0;
  std::size_t budget = 0;
};

// (1+x)/2 elementwise; validates symmetry and unit diagonal of d, snaps the
// diagonal to exactly 1.
SimilarityBundle rescale(const std::vector<double>& r,
                         const std::vector<double>& d_rowmajor);

// Convenience: build the bundle from a query and global image vectors.
SimilarityBundle similarity_bundle(const std::vector<float>& q,
                                   const std::vector<std::vector<float>>& globals);

// F(A) = lambda_rel * sum_{i in A} r~_i
//      + lambda_cov * sum_j r~_j max_{i in A} d~_ij,  with F(empty) = 0.
double sis_objective(const std::vector<std::size_t>& a,
                     const SimilarityBundle& bundle, const SisWeights& w);

// Greedy with cached facility maxima m_j(A); gain evaluation is OpenMP
// parallel over candidates with a deterministic lowest-index argmax. Stops at
// K or when the best gain is <= 0.
EvidenceSelection greedy_select(const SimilarityBundle& bundle,
                                const SisWeights& w, std::size_t k);

// Serial reference: recomputes F from scratch for every candidate. Kept for
// testing and for the benchmark target.
EvidenceSelection greedy_select_reference(const SimilarityBundle& bundle,
                                          const SisWeights& w, std::size_t k);

// Exact maximizer over all subsets of size <= K; N <= 20 guard. Ties resolve
// to the lexicographically smallest index set.
EvidenceSelection brute_force_select(const SimilarityBundle& bundle,
                                     const SisWeights& w, std::size_t k);

// Indices of the k regions most similar to q, similarity descending, ties by
// lower index; k clips to the region count.
std::vector<std::size_t> top_k_regions(const std::vector<float>& q,
                                       const EmbeddingMatrix& regions,
                                       std::size_t k);

}  // namespace saver
