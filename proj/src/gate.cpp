#include "saver/gate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "saver/errors.hpp"
#include "saver/matrix.hpp"

namespace saver {

using nlohmann::json;

GateFeatures features_from_similarities(const std::vector<double>& sims) {
  GateFeatures f;
  if (sims.empty()) {
    f.no_image = true;
    return f;
  }
  const std::size_t n = sims.size();
  f.psi_max = *std::max_element(sims.begin(), sims.end());
  double sum = 0.0;
  for (double s : sims) sum += s;
  f.mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double s : sims) sq += (s - f.mean) * (s - f.mean);
  f.std_dev = std::sqrt(sq / static_cast<double>(n));
  if (n == 1) {
    f.top2_mean = sims[0];
  } else {
    double first = -2.0, second = -2.0;
    for (double s : sims) {
      if (s > first) {
        second = first;
        first = s;
      } else if (s > second) {
        second = s;
      }
    }
    f.top2_mean = (first + second) / 2.0;
  }
  return f;
}

GateFeatures groundability_features(
    const std::vector<float>& q, const std::vector<std::vector<float>>& globals) {
  std::vector<double> sims;
  sims.reserve(globals.size());
  for (const auto& v : globals) sims.push_back(cosine(q, v));
  return features_from_similarities(sims);
}

namespace {

double affine(const GateModel& m, const std::vector<float>& h_s,
              const GateFeatures& feats) {
  if (m.weights.size() != h_s.size() + kGateFeatureCount)
    throw contract_error("gate_score: weight length != span dim + features");
  double z = m.bias;
  for (std::size_t i = 0; i < h_s.size(); ++i) z += m.weights[i] * h_s[i];
  const auto fv = feats.as_vector();
  for (std::size_t i = 0; i < kGateFeatureCount; ++i)
    z += m.weights[h_s.size() + i] * fv[i];
  return z;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double gate_score(const GateModel& model, const std::vector<float>& h_s,
                  const GateFeatures& feats) {
  return sigmoid(affine(model, h_s, feats));
}

GateModel fit_gate(const std::vector<GateExample>& examples, double l2,
                   std::size_t steps, std::uint64_t seed,
                   std::vector<double>* loss_trace) {
  if (examples.empty()) throw contract_error("fit_gate: no examples");
  const std::size_t d = examples[0].h_s.size();
  const std::size_t p = d + kGateFeatureCount;

  bool has0 = false, has1 = false;
  for (const auto& e : examples) (e.label ? has1 : has0) = true;

  GateModel m;
  m.weights.assign(p, 0.0);
  if (!has0 || !has1) {
    // Single class: constant-score model at the empirical rate.
    double rate = has1 ? 1.0 : 0.0;
    rate = std::clamp(rate, 1e-6, 1.0 - 1e-6);
    m.bias = std::log(rate / (1.0 - rate));
    m.degenerate = true;
    return m;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.01);
  for (auto& w : m.weights) w = init(rng);
  m.bias = init(rng);

  auto design_row = [&](const GateExample& e) {
    std::vector<double> x(p);
    for (std::size_t i = 0; i < d; ++i) x[i] = e.h_s[i];
    const auto fv = e.feats.as_vector();
    for (std::size_t i = 0; i < kGateFeatureCount; ++i) x[d + i] = fv[i];
    return x;
  };
  std::vector<std::vector<double>> X;
  X.reserve(examples.size());
  for (const auto& e : examples) X.push_back(design_row(e));

  const double inv_n = 1.0 / static_cast<double>(examples.size());
  auto loss_of = [&](const std::vector<double>& w, double b) {
    double loss = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      double z = b;
      for (std::size_t j = 0; j < p; ++j) z += w[j] * X[i][j];
      // log(1 + exp(-y*z)) with y in {-1, +1}
      double yz = (examples[i].label ? z : -z);
      loss += yz > 0 ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
    }
    loss *= inv_n;
    for (double wj : w) loss += 0.5 * l2 * wj * wj;
    return loss;
  };

  double lr = 1.0;
  double cur = loss_of(m.weights, m.bias);
  if (loss_trace) loss_trace->push_back(cur);
  std::vector<double> grad(p);
  for (std::size_t step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      double z = m.bias;
      for (std::size_t j = 0; j < p; ++j) z += m.weights[j] * X[i][j];
      double err = sigmoid(z) - examples[i].label;
      for (std::size_t j = 0; j < p; ++j) grad[j] += err * X[i][j];
      gb += err;
    }
    for (std::size_t j = 0; j < p; ++j)
      grad[j] = grad[j] * inv_n + l2 * m.weights[j];
    gb *= inv_n;

    // Backtrack until the step does not increase the loss.
    while (lr > 1e-12) {
      std::vector<double> wtry = m.weights;
      for (std::size_t j = 0; j < p; ++j) wtry[j] -= lr * grad[j];
      double btry = m.bias - lr * gb;
      double ltry = loss_of(wtry, btry);
      if (ltry <= cur) {
        m.weights = std::move(wtry);
        m.bias = btry;
        cur = ltry;
        break;
      }
      lr *= 0.5;
    }
    if (loss_trace && (step + 1) % 10 == 0) loss_trace->push_back(cur);
  }
  return m;
}

void save_gate_model(const GateModel& m, const std::string& path) {
  json j;
  j["format"] = "saver-gate-model";
  j["version"] = 1;
  j["dim"] = m.span_dim();
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  j["degenerate"] = m.degenerate;
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  os << j.dump(2) << "\n";
}

GateModel load_gate_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw format_error(std::string("gate model parse: ") + e.what());
  }
  if (j.value("format", "") != "saver-gate-model" || j.value("version", 0) != 1)
    throw format_error("not a saver gate model file: " + path);
  GateModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.degenerate = j.value("degenerate", false);
  return m;
}

}  // namespace saver
