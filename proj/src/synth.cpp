#include "saver/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "saver/calibration.hpp"
#include "saver/errors.hpp"

namespace saver {

using nlohmann::json;

namespace {

std::vector<float> normalize(std::vector<float> v) {
  double n = 0.0;
  for (float x : v) n += static_cast<double>(x) * x;
  n = std::sqrt(n);
  if (n == 0.0) return v;
  for (auto& x : v) x = static_cast<float>(x / n);
  return v;
}

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(g(rng));
  return normalize(std::move(v));
}

std::vector<float> perturbed(const std::vector<float>& base, double scale,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<float> v(base.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<float>(base[i] + scale * g(rng));
  return normalize(std::move(v));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void WorldConfig::validate() const {
  if (dim < 2) throw contract_error("WorldConfig: dim must be >= 2");
  if (groundable_fraction < 0.0 || groundable_fraction > 1.0)
    throw contract_error("WorldConfig: groundable_fraction outside [0,1]");
  if (error_rate_groundable < 0.0 || error_rate_groundable > 1.0 ||
      error_rate_ungroundable < 0.0 || error_rate_ungroundable > 1.0)
    throw contract_error("WorldConfig: error rates outside [0,1]");
  if (min_images < 1 || max_images < min_images)
    throw contract_error("WorldConfig: bad image count range");
  if (n_samples == 0 || units_per_sample == 0)
    throw contract_error("WorldConfig: empty world");
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> n_img_dist(cfg.min_images,
                                                        cfg.max_images);

  World world;
  for (std::size_t si = 0; si < cfg.n_samples; ++si) {
    Sample s;
    s.id = "s" + std::to_string(si);
    std::vector<float> topic = random_unit(rng, cfg.dim);

    const std::size_t n_img = n_img_dist(rng);
    for (std::size_t ii = 0; ii < n_img; ++ii) {
      ImageEntry e;
      e.image_id = "img" + std::to_string(ii);
      if (ii == 0) {
        e.global_vec = perturbed(topic, cfg.noise_scale, rng);  // useful
      } else {
        double roll = uni(rng);
        if (roll < 0.34) {
          e.global_vec = perturbed(topic, cfg.noise_scale, rng);  // useful
        } else if (roll < 0.67) {
          // redundant: near-duplicate of the anchor image
          e.global_vec = perturbed(s.images[0].global_vec, 0.02, rng);
        } else {
          // misleading: anti-aligned with the topic
          std::vector<float> anti(topic.size());
          for (std::size_t j = 0; j < anti.size(); ++j) anti[j] = -topic[j];
          e.global_vec = perturbed(anti, cfg.noise_scale, rng);
        }
      }
      // Four regions around the global vector, kept behind the lazy store.
      EmbeddingMatrix regions(4, cfg.dim);
      for (std::size_t r = 0; r < 4; ++r) {
        auto v = perturbed(e.global_vec, 0.1, rng);
        std::copy(v.begin(), v.end(), regions.row(r).begin());
      }
      e.regions = RegionStore::in_memory(std::move(regions));
      s.images.push_back(std::move(e));
    }

    s.tokens = EmbeddingMatrix(cfg.units_per_sample * 2, cfg.dim);
    for (std::size_t ui = 0; ui < cfg.units_per_sample; ++ui) {
      bool groundable = uni(rng) < cfg.groundable_fraction;
      std::vector<float> q;
      if (groundable) {
        q = perturbed(topic, cfg.noise_scale, rng);
      } else {
        std::vector<float> r = random_unit(rng, cfg.dim);
        if (cfg.relevance_gap < 1.0) {
          for (std::size_t j = 0; j < r.size(); ++j)
            r[j] = static_cast<float>((1.0 - cfg.relevance_gap) * topic[j] +
                                      r[j]);
        }
        q = normalize(std::move(r));
      }
      std::copy(q.begin(), q.end(), s.tokens.row(2 * ui).begin());
      std::copy(q.begin(), q.end(), s.tokens.row(2 * ui + 1).begin());

      UnitSpec u;
      u.kind = UnitKind::Span;
      u.span = {2 * ui, 2 * ui + 1};
      int gold = static_cast<int>(rng() % 3);
      u.gold = gold;
      s.units.push_back(u);

      double psi = -1.0;
      for (const auto& im : s.images) psi = std::max(psi, cosine(q, im.global_vec));
      UnitTruth t;
      t.sample_id = s.id;
      t.unit_index = ui;
      t.groundable = groundable;
      t.error_prob =
          groundable ? cfg.error_rate_groundable : cfg.error_rate_ungroundable;
      t.loss = uni(rng) < t.error_prob ? 1 : 0;
      t.gate_score = sigmoid(6.0 * (psi - 0.4));
      t.gold = gold;
      world.truth.push_back(t);
    }
    world.samples.push_back(std::move(s));
  }
  return world;
}

void write_truth(const std::vector<UnitTruth>& truth, const std::string& path,
                 const std::string& header) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  if (!header.empty()) os << header << "\n";
  for (const auto& t : truth) {
    json j;
    j["sample_id"] = t.sample_id;
    j["unit_index"] = t.unit_index;
    j["groundable"] = t.groundable;
    j["error_prob"] = t.error_prob;
    j["loss"] = t.loss;
    j["gate_score"] = t.gate_score;
    j["gold"] = t.gold;
    os << j.dump() << "\n";
  }
}

std::vector<UnitTruth> read_truth(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  std::vector<UnitTruth> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.is_object() && j.contains("saver_manifest")) continue;
    UnitTruth t;
    t.sample_id = j.at("sample_id").get<std::string>();
    t.unit_index = j.at("unit_index").get<std::size_t>();
    t.groundable = j.at("groundable").get<bool>();
    t.error_prob = j.at("error_prob").get<double>();
    t.loss = j.at("loss").get<int>();
    t.gate_score = j.at("gate_score").get<double>();
    t.gold = j.at("gold").get<int>();
    out.push_back(t);
  }
  return out;
}

MonteCarloReport monte_carlo_calibration_check(const WorldConfig& cfg,
                                               double alpha, double delta,
                                               std::size_t runs) {
  if (runs < 100)
    throw contract_error("monte_carlo_calibration_check: runs must be >= 100");
  std::size_t violations = 0;
  double cov_sum = 0.0, oracle_sum = 0.0, risk_sum = 0.0;

#pragma omp parallel for schedule(dynamic) \
    reduction(+ : violations, cov_sum, oracle_sum, risk_sum)
  for (std::ptrdiff_t run = 0; run < static_cast<std::ptrdiff_t>(runs); ++run) {
    WorldConfig wc = cfg;
    wc.seed = cfg.seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(run) + 1);
    World world = generate_world(wc);

    const std::size_t total = world.truth.size();
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 split_rng(wc.seed ^ 0xabcdef12345ULL);
    std::shuffle(idx.begin(), idx.end(), split_rng);
    const std::size_t n_cal = total / 2;

    CalibrationInput in;
    in.alpha = alpha;
    in.delta = delta;
    for (std::size_t i = 0; i < n_cal; ++i) {
      in.scores.push_back(world.truth[idx[i]].gate_score);
      in.losses.push_back(world.truth[idx[i]].loss);
    }
    CalibrationResult res = calibrate_threshold(in);

    // TRUE activated risk on the test half from recorded error probabilities.
    double act_err = 0.0;
    std::size_t act_n = 0;
    std::vector<std::pair<double, double>> test_units;  // (score, error_prob)
    for (std::size_t i = n_cal; i < total; ++i) {
      const auto& t = world.truth[idx[i]];
      test_units.emplace_back(t.gate_score, t.error_prob);
      if (res.feasible && t.gate_score >= res.tau) {
        act_err += t.error_prob;
        ++act_n;
      }
    }
    double true_risk = act_n ? act_err / static_cast<double>(act_n) : 0.0;
    if (true_risk > alpha) ++violations;
    risk_sum += true_risk;
    cov_sum += static_cast<double>(act_n) / static_cast<double>(test_units.size());

    // Oracle: largest score-induced coverage with true prefix risk <= alpha.
    std::sort(test_units.begin(), test_units.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    double prefix_err = 0.0, best_cov = 0.0;
    for (std::size_t i = 0; i < test_units.size(); ++i) {
      prefix_err += test_units[i].second;
      if (prefix_err / static_cast<double>(i + 1) <= alpha)
        best_cov = static_cast<double>(i + 1) /
                   static_cast<double>(test_units.size());
    }
    oracle_sum += best_cov;
  }

  MonteCarloReport rep;
  rep.runs = runs;
  rep.violations = violations;
  rep.violation_rate = static_cast<double>(violations) / static_cast<double>(runs);
  rep.mean_coverage = cov_sum / static_cast<double>(runs);
  rep.mean_oracle_coverage = oracle_sum / static_cast<double>(runs);
  rep.mean_true_risk = risk_sum / static_cast<double>(runs);
  return rep;
}

}  // namespace saver
