#include "saver/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saver/errors.hpp"

namespace saver {

SimilarityBundle rescale(const std::vector<double>& r,
                         const std::vector<double>& d_rowmajor) {
  const std::size_t n = r.size();
  if (d_rowmajor.size() != n * n)
    throw contract_error("rescale: d must be N x N");
  for (double x : r)
    if (x < -1.0 - 1e-6 || x > 1.0 + 1e-6)
      throw contract_error("rescale: relevance outside [-1,1]");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(d_rowmajor[i * n + i] - 1.0) > 1e-9)
      throw contract_error("rescale: d diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      double x = d_rowmajor[i * n + j];
      if (x < -1.0 - 1e-6 || x > 1.0 + 1e-6)
        throw contract_error("rescale: d entry outside [-1,1]");
      if (std::abs(x - d_rowmajor[j * n + i]) > 1e-9)
        throw contract_error("rescale: d must be symmetric");
    }
  }
  SimilarityBundle b;
  b.n = n;
  b.relevance.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    b.relevance[i] = (1.0 + std::clamp(r[i], -1.0, 1.0)) / 2.0;
  b.cross.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      b.cross[i * n + j] =
          i == j ? 1.0
                 : (1.0 + std::clamp(d_rowmajor[i * n + j], -1.0, 1.0)) / 2.0;
  return b;
}

SimilarityBundle similarity_bundle(
    const std::vector<float>& q, const std::vector<std::vector<float>>& globals) {
  const std::size_t n = globals.size();
  std::vector<double> r(n), d(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) r[i] = cosine(q, globals[i]);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < n; ++j) {
      double c = cosine(globals[static_cast<std::size_t>(i)], globals[j]);
      d[static_cast<std::size_t>(i) * n + j] = c;
      d[j * n + static_cast<std::size_t>(i)] = c;
    }
  }
  return rescale(r, d);
}

double sis_objective(const std::vector<std::size_t>& a,
                     const SimilarityBundle& bundle, const SisWeights& w) {
  for (std::size_t i : a)
    if (i >= bundle.n) throw contract_error("sis_objective: index out of range");
  if (a.empty()) return 0.0;
  double rel = 0.0;
  for (std::size_t i : a) rel += bundle.rel(i);
  double cov = 0.0;
  for (std::size_t j = 0; j < bundle.n; ++j) {
    double m = 0.0;  // m_j(empty) = 0, but a is non-empty here
    for (std::size_t i : a) m = std::max(m, bundle.d(i, j));
    cov += bundle.rel(j) * m;
  }
  return w.lambda_rel * rel + w.lambda_cov * cov;
}

EvidenceSelection greedy_select(const SimilarityBundle& bundle,
                                const SisWeights& w, std::size_t k) {
  if (k < 1) throw contract_error("greedy_select: K must be >= 1");
  const std::size_t n = bundle.n;
  if (n < 1) throw contract_error("greedy_select: N must be >= 1");

  EvidenceSelection sel;
  sel.budget = k;
  std::vector<double> facility_max(n, 0.0);  // m_j(A)
  std::vector<char> picked(n, 0);
  std::vector<double> gain(n);

  for (std::size_t t = 0; t < std::min(k, n); ++t) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      if (picked[i]) {
        gain[i] = -1.0;
        continue;
      }
      double g = w.lambda_rel * bundle.rel(i);
      double cov = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double inc = bundle.d(i, j) - facility_max[j];
        if (inc > 0.0) cov += bundle.rel(j) * inc;
      }
      gain[i] = g + w.lambda_cov * cov;
    }
    // Deterministic argmax, ties to the lowest index.
    std::size_t best = n;
    double best_gain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      if (best == n || gain[i] > best_gain) {
        best = i;
        best_gain = gain[i];
      }
    }
    if (best == n || best_gain <= 0.0) break;
    picked[best] = 1;
    sel.chosen.push_back(best);
    sel.gains.push_back(best_gain);
    for (std::size_t j = 0; j < n; ++j)
      facility_max[j] = std::max(facility_max[j], bundle.d(best, j));
  }
  sel.objective = sis_objective(sel.chosen, bundle, w);
  return sel;
}

EvidenceSelection greedy_select_reference(const SimilarityBundle& bundle,
                                          const SisWeights& w, std::size_t k) {
  if (k < 1) throw contract_error("greedy_select_reference: K must be >= 1");
  const std::size_t n = bundle.n;
  if (n < 1) throw contract_error("greedy_select_reference: N must be >= 1");

  EvidenceSelection sel;
  sel.budget = k;
  double current = 0.0;
  std::vector<char> picked(n, 0);
  for (std::size_t t = 0; t < std::min(k, n); ++t) {
    std::size_t best = n;
    double best_gain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      std::vector<std::size_t> trial = sel.chosen;
      trial.push_back(i);
      double g = sis_objective(trial, bundle, w) - current;
      if (best == n || g > best_gain) {
        best = i;
        best_gain = g;
      }
    }
    if (best == n || best_gain <= 0.0) break;
    picked[best] = 1;
    sel.chosen.push_back(best);
    sel.gains.push_back(best_gain);
    current += best_gain;
  }
  sel.objective = sis_objective(sel.chosen, bundle, w);
  return sel;
}

EvidenceSelection brute_force_select(const SimilarityBundle& bundle,
                                     const SisWeights& w, std::size_t k) {
  const std::size_t n = bundle.n;
  if (n > 20) throw contract_error("brute_force_select: N > 20");
  if (k < 1) throw contract_error("brute_force_select: K must be >= 1");

  std::vector<std::size_t> best_set;
  double best_val = 0.0;
  bool have = false;
  const std::uint32_t limit = 1u << n;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) > k) continue;
    std::vector<std::size_t> a;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) a.push_back(i);
    double v = sis_objective(a, bundle, w);
    // Ties resolve to the lexicographically smallest index set; ascending
    // mask enumeration visits sets in an order where smaller lexicographic
    // sets need an explicit comparison.
    if (!have || v > best_val + 1e-12 ||
        (std::abs(v - best_val) <= 1e-12 &&
         std::lexicographical_compare(a.begin(), a.end(), best_set.begin(),
                                      best_set.end()))) {
      best_set = a;
      best_val = v;
      have = true;
    }
  }
  EvidenceSelection sel;
  sel.budget = k;
  sel.chosen = best_set;
  sel.objective = best_val;
  return sel;
}

std::vector<std::size_t> top_k_regions(const std::vector<float>& q,
                                       const EmbeddingMatrix& regions,
                                       std::size_t k) {
  if (regions.rows == 0) throw contract_error("top_k_regions: empty regions");
  std::vector<std::size_t> idx(regions.rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> sims(regions.rows);
  for (std::size_t i = 0; i < regions.rows; ++i) {
    auto row = regions.row(i);
    sims[i] = cosine(std::span<const float>(q), row);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return sims[a] > sims[b];
  });
  idx.resize(std::min(k, regions.rows));
  return idx;
}

}  // namespace saver
