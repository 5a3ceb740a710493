// Acceptance gate: one self-contained check per release criterion, each
// printed as a single pass/fail line. Exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <vector>

#include "saver/calibration.hpp"
#include "saver/dataset.hpp"
#include "saver/errors.hpp"
#include "saver/matrix.hpp"
#include "saver/metrics.hpp"
#include "saver/pipeline.hpp"
#include "saver/scoring.hpp"
#include "saver/selector.hpp"
#include "saver/set_encoder.hpp"
#include "saver/synth.hpp"

using namespace saver;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

CostConfig bench_cost() {
  CostConfig c;
  c.f_text = 10.0;
  c.f_vglob = 4.0;
  c.f_vreg_per_k = 20.0;
  c.f_fuse_per_k = 6.0;
  c.f_head = 1.0;
  return c;
}

// 1. Exact binomial upper bound: closed form at k = 0, k = n, and tail
// inversion across a 50x50 grid.
bool criterion_cp_bound() {
  auto t0 = Clock::now();
  const double delta = 0.05;
  for (std::size_t n = 1; n <= 200; ++n) {
    double expect = 1.0 - std::pow(delta, 1.0 / static_cast<double>(n));
    if (!close(cp_upper(0, n, 1.0 - delta), expect, 1e-9)) return false;
    if (cp_upper(n, n, 1.0 - delta) != 1.0) return false;
  }
  for (std::size_t n = 1; n <= 50; ++n)
    for (std::size_t k = 0; k < n; ++k) {
      double u = cp_upper(k, n, 1.0 - delta);
      if (!close(binom_cdf(k, n, u), delta, 1e-8)) return false;
    }
  return seconds_since(t0) < 5.0;
}

// 2. Monte Carlo check of the selective risk guarantee on synthetic worlds
// with known per-unit error probabilities.
bool criterion_calibration_guarantee() {
  auto t0 = Clock::now();
  WorldConfig cfg;
  cfg.n_samples = 200;       // 1000 units per draw, 500 in the calibration half
  cfg.units_per_sample = 5;
  cfg.dim = 8;
  cfg.seed = 424242;
  auto rep = monte_carlo_calibration_check(cfg, 0.10, 0.05, 500);
  std::printf("    runs=%zu violation_rate=%.4f coverage=%.4f oracle=%.4f "
              "true_risk=%.4f\n",
              rep.runs, rep.violation_rate, rep.mean_coverage,
              rep.mean_oracle_coverage, rep.mean_true_risk);
  if (rep.violation_rate > 0.08) return false;
  if (rep.mean_coverage < rep.mean_oracle_coverage - 0.05) return false;
  return seconds_since(t0) < 120.0;
}

// 3. Greedy selector: approximation ratio against brute force, cached gains
// against the serial reference, and the worked three-image instance.
bool criterion_selector() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double ratio = 1.0 - 1.0 / std::exp(1.0);
  for (int it = 0; it < 1000; ++it) {
    std::size_t n = 2 + rng() % 7;
    std::size_t k = 1 + rng() % std::min<std::size_t>(4, n);
    SimilarityBundle b;
    b.n = n;
    b.relevance.resize(n);
    for (auto& r : b.relevance) r = uni(rng);
    b.cross.assign(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double v = uni(rng);
        b.cross[i * n + j] = v;
        b.cross[j * n + i] = v;
      }
    auto fast = greedy_select(b, SisWeights{}, k);
    auto ref = greedy_select_reference(b, SisWeights{}, k);
    if (fast.chosen != ref.chosen) return false;
    auto opt = brute_force_select(b, SisWeights{}, k);
    if (fast.objective < ratio * opt.objective - 1e-9) return false;
  }
  SimilarityBundle worked;
  worked.n = 3;
  worked.relevance = {0.9, 0.8, 0.2};
  worked.cross = {1.0, 0.95, 0.3, 0.95, 1.0, 0.3, 0.3, 0.3, 1.0};
  auto sel = greedy_select(worked, SisWeights{}, 2);
  if (sel.chosen != std::vector<std::size_t>{0, 1}) return false;
  if (!close(sel.objective, 3.46, 1e-12)) return false;
  return seconds_since(t0) < 60.0;
}

// 4. Set encoder permutation invariance across random evidence sets.
bool criterion_permutation_invariance() {
  std::mt19937_64 rng(13);
  std::normal_distribution<float> val(0.0f, 1.0f);
  auto w = SetEncoderWeights::seeded(8, 4, 16, 99);
  for (int set_i = 0; set_i < 50; ++set_i) {
    std::size_t count = 1 + rng() % 16;
    std::vector<std::vector<float>> ev(count, std::vector<float>(8));
    for (auto& v : ev)
      for (auto& x : v) x = val(rng);
    auto base = set_encode(ev, w);
    double base_norm = 0.0;
    for (float x : base) base_norm += static_cast<double>(x) * x;
    base_norm = std::sqrt(base_norm) + 1e-12;
    for (int p = 0; p < 100; ++p) {
      std::shuffle(ev.begin(), ev.end(), rng);
      auto out = set_encode(ev, w);
      double diff = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i)
        diff += (static_cast<double>(out[i]) - base[i]) *
                (static_cast<double>(out[i]) - base[i]);
      if (std::sqrt(diff) / base_norm > 1e-5) return false;
    }
  }
  return true;
}

// 5. Metric oracles: hand-computed risk/coverage fixtures plus 20+ exact
// F1 fixtures built from known TP/FP/FN counts.
bool criterion_metrics() {
  auto curve = risk_coverage({0.9, 0.8, 0.7, 0.6}, {0, 0, 1, 0});
  if (curve.points[0].risk != 0.0) return false;
  if (!close(curve.points[2].risk, 1.0 / 3.0, 1e-15)) return false;
  if (!close(curve.points[3].risk, 0.25, 1e-15)) return false;
  if (!close(aurc(curve), (1.0 / 3.0 + 0.25) / 4.0, 1e-15)) return false;
  if (!close(act_cov_at(curve, 0.10), 0.5, 1e-15)) return false;
  if (!close(act_cov_at(curve, 0.50), 1.0, 1e-15)) return false;

  // Entity fixtures: tp matched spans, fp extra predictions, fn missed golds.
  int fixtures = 0;
  for (int tp = 0; tp <= 3; ++tp)
    for (int fp = 0; fp <= 2; ++fp)
      for (int fn = 0; fn <= 1; ++fn) {
        EntityPrediction pred, gold;
        for (int i = 0; i < tp; ++i) {
          TypedSpan t{{static_cast<std::size_t>(10 * i),
                       static_cast<std::size_t>(10 * i + 1)}, 0};
          pred.entities.push_back(t);
          gold.entities.push_back(t);
        }
        for (int i = 0; i < fp; ++i)
          pred.entities.push_back({{static_cast<std::size_t>(100 + 10 * i),
                                    static_cast<std::size_t>(100 + 10 * i)}, 1});
        for (int i = 0; i < fn; ++i)
          gold.entities.push_back({{static_cast<std::size_t>(200 + 10 * i),
                                    static_cast<std::size_t>(200 + 10 * i)}, 1});
        auto pr = entity_f1(pred, gold);
        double p = tp + fp ? static_cast<double>(tp) / (tp + fp)
                           : (tp + fn ? 0.0 : 1.0);
        double r = tp + fn ? static_cast<double>(tp) / (tp + fn)
                           : (tp + fp ? 0.0 : 1.0);
        double f = p + r > 0 ? 2 * p * r / (p + r)
                             : (tp + fp + fn == 0 ? 1.0 : 0.0);
        if (!close(pr.precision, p, 1e-12) || !close(pr.recall, r, 1e-12) ||
            !close(pr.f1, f, 1e-12))
          return false;
        ++fixtures;
      }

  // Relation fixtures with hand micro counts; id 0 is the excluded null.
  struct RelFix {
    std::vector<int> pred, gold;
    double p, r;
  };
  std::vector<RelFix> rel = {
      {{1, 2, 3}, {1, 2, 3}, 1.0, 1.0},
      {{1, 2}, {1, 3}, 0.5, 0.5},
      {{0, 1, 0}, {0, 1, 2}, 1.0, 0.5},
      {{1, 2, 0}, {0, 2, 0}, 0.5, 1.0},
      {{0, 0}, {1, 2}, 0.0, 0.0},
      {{1, 1, 1, 2}, {1, 1, 2, 2}, 0.75, 0.75},
  };
  for (const auto& fx : rel) {
    auto pr = relation_micro_f1(fx.pred, fx.gold);
    if (!close(pr.precision, fx.p, 1e-12) || !close(pr.recall, fx.r, 1e-12))
      return false;
    ++fixtures;
  }
  return fixtures >= 20;
}

// 6. Lazy routing: tau = +inf makes zero region reads and text-only cost;
// partial activation is strictly cheaper than always-on.
bool criterion_lazy_routing() {
  WorldConfig wc;
  wc.n_samples = 10;
  wc.dim = 8;
  wc.seed = 55;
  World w = generate_world(wc);
  auto model = PipelineModel::seeded(8, 8, 3, 3, 3);

  PipelineConfig off;
  off.cost = bench_cost();
  off.tau = std::numeric_limits<double>::infinity();
  RegionStore::reset_read_count();
  auto res = route_dataset(w.samples, model, off);
  if (RegionStore::read_count() != 0) return false;
  for (const auto& r : res)
    if (!close(r.measured_cost, estimate_cost(off.cost, 0.0, off.budget_k),
               1e-12))
      return false;

  PipelineConfig mid = off;
  mid.tau = 0.5;
  double always_on = estimate_cost(mid.cost, 1.0, mid.budget_k);
  auto res_mid = route_dataset(w.samples, model, mid);
  double gbar_sum = 0.0;
  bool partial_seen = false;
  for (const auto& r : res_mid) {
    gbar_sum += r.gamma_bar;
    if (r.gamma_bar > 0.0 && r.gamma_bar < 1.0) {
      partial_seen = true;
      if (!(r.measured_cost < always_on)) return false;
    }
  }
  double gbar = gbar_sum / static_cast<double>(res_mid.size());
  return partial_seen && gbar > 0.0 && gbar < 1.0;
}

// 7. Directional end-to-end: calibrated gating keeps activated risk under
// alpha while always-on pays more for equal-or-worse risk.
bool criterion_end_to_end() {
  auto t0 = Clock::now();
  const double alpha = 0.10;
  WorldConfig wc;
  wc.n_samples = 80;
  wc.units_per_sample = 5;
  wc.dim = 8;
  wc.seed = 77;
  World w = generate_world(wc);
  auto model = PipelineModel::seeded(8, 8, 3, 3, 6);

  const std::size_t n_cal_samples = wc.n_samples / 2;
  std::vector<Sample> cal(w.samples.begin(), w.samples.begin() + n_cal_samples);
  std::vector<Sample> test(w.samples.begin() + n_cal_samples, w.samples.end());

  // Calibrate on pipeline gate scores paired with the worlds' true sampled
  // losses for the forced-on visual path.
  PipelineConfig forced;
  forced.cost = bench_cost();
  forced.tau = -std::numeric_limits<double>::infinity();
  auto cal_res = route_dataset(cal, model, forced);
  CalibrationInput in;
  in.alpha = alpha;
  in.delta = 0.05;
  for (std::size_t si = 0; si < cal.size(); ++si)
    for (std::size_t ui = 0; ui < cal[si].units.size(); ++ui) {
      in.scores.push_back(cal_res[si].traces[ui].g);
      in.losses.push_back(w.truth[si * wc.units_per_sample + ui].loss);
    }
  auto calres = calibrate_threshold(in);
  if (!calres.feasible) return false;

  PipelineConfig routed = forced;
  routed.tau = calres.tau;
  auto test_res = route_dataset(test, model, routed);
  double act_loss = 0.0, all_loss = 0.0, cost_sum = 0.0;
  std::size_t act_n = 0, all_n = 0;
  for (std::size_t si = 0; si < test.size(); ++si) {
    cost_sum += test_res[si].measured_cost;
    for (std::size_t ui = 0; ui < test[si].units.size(); ++ui) {
      int loss =
          w.truth[(n_cal_samples + si) * wc.units_per_sample + ui].loss;
      all_loss += loss;
      ++all_n;
      if (test_res[si].traces[ui].gamma == 1) {
        act_loss += loss;
        ++act_n;
      }
    }
  }
  if (act_n == 0) return false;
  double act_risk = act_loss / static_cast<double>(act_n);
  double always_risk = all_loss / static_cast<double>(all_n);
  double mean_cost = cost_sum / static_cast<double>(test.size());
  double always_cost = estimate_cost(routed.cost, 1.0, routed.budget_k);
  std::printf("    tau=%.4f activated=%zu/%zu risk=%.4f always_risk=%.4f "
              "cost=%.1f always_cost=%.1f\n",
              calres.tau, act_n, all_n, act_risk, always_risk, mean_cost,
              always_cost);
  if (act_risk > alpha) return false;
  if (always_risk < act_risk) return false;
  if (!(mean_cost < always_cost)) return false;
  return seconds_since(t0) < 60.0;
}

// 8. Decoding invariants over fuzzed candidate sets.
bool criterion_decoding() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> val(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int it = 0; it < 10000; ++it) {
    ScoringHeads h = ScoringHeads::seeded(2, 2, 3, 3, rng());
    std::vector<CandidateSpan> cands;
    std::size_t n = 1 + rng() % 7;
    for (std::size_t i = 0; i < n; ++i) {
      CandidateSpan c;
      std::size_t a = rng() % 14;
      c.span = {a, a + rng() % 3};
      c.h_tilde = {static_cast<float>(val(rng)), static_cast<float>(val(rng))};
      c.eta = (rng() % 2) ? uni(rng) : 0.0;
      c.consis = val(rng) / 2.0;
      cands.push_back(c);
    }
    auto pred = ner_decode(cands, h);
    for (std::size_t i = 0; i < pred.entities.size(); ++i)
      for (std::size_t j = i + 1; j < pred.entities.size(); ++j) {
        const auto& x = pred.entities[i].span;
        const auto& y = pred.entities[j].span;
        if (x.a <= y.b && y.a <= x.b) return false;
      }
    std::shuffle(cands.begin(), cands.end(), rng);
    if (ner_decode(cands, h).entities != pred.entities) return false;

    std::vector<float> u{static_cast<float>(val(rng)),
                         static_cast<float>(val(rng))};
    int base = re_predict(u, 0.0, 0.0, h);
    if (re_predict(u, uni(rng), val(rng), h) != base) return false;
  }
  return true;
}

// 9. Binary matrix format: byte-exact round trips, corrupt headers rejected.
bool criterion_file_format() {
  std::mt19937_64 rng(23);
  std::normal_distribution<float> val(0.0f, 1.0f);
  const std::string path = "/tmp/saver_acceptance_matrix.savr";
  for (int it = 0; it < 1000; ++it) {
    EmbeddingMatrix m(1 + rng() % 16, 1 + rng() % 16);
    for (auto& x : m.data) x = val(rng);
    write_matrix(m, path);
    if (read_matrix(path) != m) return false;
  }
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("XXXX", 1, 4, f);
    std::fclose(f);
    try {
      read_matrix(path);
      return false;
    } catch (const format_error&) {
    }
  }
  {
    EmbeddingMatrix m(2, 3);
    write_matrix(m, path);
    std::FILE* f = std::fopen(path.c_str(), "rb+");
    std::fseek(f, 8, SEEK_SET);
    std::uint64_t rows = 5;  // claims more payload than the file holds
    std::fwrite(&rows, sizeof rows, 1, f);
    std::fclose(f);
    try {
      read_matrix(path);
      return false;
    } catch (const format_error&) {
    }
  }
  try {
    read_matrix("/tmp/saver_acceptance_missing.savr");
    return false;
  } catch (const io_error&) {
  }
  return true;
}

struct Criterion {
  const char* name;
  bool (*fn)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"1 exact binomial upper bound", criterion_cp_bound},
      {"2 calibration guarantee (Monte Carlo)", criterion_calibration_guarantee},
      {"3 submodular selector", criterion_selector},
      {"4 set-encoder permutation invariance", criterion_permutation_invariance},
      {"5 metric oracles", criterion_metrics},
      {"6 lazy-routing contract", criterion_lazy_routing},
      {"7 end-to-end directional check", criterion_end_to_end},
      {"8 decoding invariants", criterion_decoding},
      {"9 file-format round trips", criterion_file_format},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("    exception: %s\n", e.what());
    }
    std::printf("[%s] criterion %s\n", ok ? "PASS" : "FAIL", c.name);
    if (!ok) ++failures;
  }
  return failures ? 1 : 0;
}
