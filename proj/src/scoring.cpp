#include "saver/scoring.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "saver/errors.hpp"

namespace saver {

using nlohmann::json;

namespace {

double dot_head(const std::vector<double>& w, std::size_t row, std::size_t dim,
                const std::vector<float>& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < dim; ++j) acc += w[row * dim + j] * x[j];
  return acc;
}

bool spans_overlap(Span a, Span b) { return a.a <= b.b && b.a <= a.b; }

}  // namespace

ScoringHeads ScoringHeads::seeded(std::size_t dim, std::size_t pair_dim,
                                  std::size_t n_types, std::size_t n_relations,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.5);
  ScoringHeads h;
  h.dim = dim;
  h.pair_dim = pair_dim;
  auto fill = [&](std::vector<double>& v, std::size_t sz) {
    v.resize(sz);
    for (auto& x : v) x = dist(rng);
  };
  fill(h.span_w0, dim);
  fill(h.span_w1, dim);
  h.span_b0 = dist(rng);
  h.span_b1 = dist(rng);
  fill(h.type_w, n_types * dim);
  fill(h.type_b, n_types);
  fill(h.rel_w, n_relations * pair_dim);
  fill(h.rel_b, n_relations);
  return h;
}

UnitEnergies unit_energy_terms(const std::vector<float>& h_tilde, double eta,
                               double consis, const ScoringHeads& heads) {
  if (h_tilde.size() != heads.dim)
    throw contract_error("unit_energy_terms: h~ dim mismatch");
  if (heads.n_types() == 0)
    throw contract_error("unit_energy_terms: empty type inventory");
  UnitEnergies e;
  e.e_delta0 = dot_head(heads.span_w0, 0, heads.dim, h_tilde) + heads.span_b0;
  e.e_delta1_base =
      dot_head(heads.span_w1, 0, heads.dim, h_tilde) + heads.span_b1;
  // f_cons(x) = -x rewards consistency; the gate term charges activation.
  e.unit_additive =
      heads.lambda_cons * eta * (-consis) + heads.lambda_gate * eta;
  e.e_type.resize(heads.n_types());
  e.best_type = 0;
  double best = 0.0;
  for (std::size_t y = 0; y < heads.n_types(); ++y) {
    e.e_type[y] = dot_head(heads.type_w, y, heads.dim, h_tilde) + heads.type_b[y];
    if (y == 0 || e.e_type[y] < best) {
      best = e.e_type[y];
      e.best_type = static_cast<int>(y);
    }
  }
  e.best_typed_energy = e.e_delta1_base + best;
  return e;
}

EntityPrediction ner_decode(const std::vector<CandidateSpan>& candidates,
                            const ScoringHeads& heads) {
  struct Item {
    Span span;
    int type;
    double energy;
  };
  std::vector<Item> admissible;
  for (const auto& c : candidates) {
    if (c.span.length() > kDefaultMaxSpanLength)
      throw contract_error("ner_decode: candidate exceeds max span length");
    UnitEnergies e = unit_energy_terms(c.h_tilde, c.eta, c.consis, heads);
    if (e.best_typed_energy < e.e_delta0)
      admissible.push_back(
          {c.span, e.best_type, e.best_typed_energy + e.unit_additive});
  }
  std::sort(admissible.begin(), admissible.end(), [](const Item& x, const Item& y) {
    if (x.energy != y.energy) return x.energy < y.energy;
    if (x.span.a != y.span.a) return x.span.a < y.span.a;
    if (x.span.b != y.span.b) return x.span.b < y.span.b;
    return x.type < y.type;
  });
  EntityPrediction pred;
  for (const auto& item : admissible) {
    bool clash = false;
    for (const auto& kept : pred.entities)
      if (spans_overlap(item.span, kept.span)) {
        clash = true;
        break;
      }
    if (!clash) pred.entities.push_back({item.span, item.type});
  }
  return pred;
}

std::vector<double> relation_energies(const std::vector<float>& u_tilde,
                                      double eta, double consis,
                                      const ScoringHeads& heads) {
  if (u_tilde.size() != heads.pair_dim)
    throw contract_error("relation_energies: u~ dim mismatch");
  if (heads.n_relations() == 0)
    throw contract_error("relation_energies: empty relation inventory");
  const double additive =
      heads.lambda_cons * eta * (-consis) + heads.lambda_gate * eta;
  std::vector<double> e(heads.n_relations());
  for (std::size_t r = 0; r < heads.n_relations(); ++r)
    e[r] = dot_head(heads.rel_w, r, heads.pair_dim, u_tilde) + heads.rel_b[r] +
           additive;
  return e;
}

int re_predict(const std::vector<float>& u_tilde, double eta, double consis,
               const ScoringHeads& heads) {
  auto e = relation_energies(u_tilde, eta, consis, heads);
  std::size_t best = 0;
  for (std::size_t r = 1; r < e.size(); ++r)
    if (e[r] < e[best]) best = r;
  return static_cast<int>(best);
}

double total_energy(const std::vector<CandidateSpan>& candidates,
                    const EntityPrediction& prediction,
                    const ScoringHeads& heads) {
  double total = 0.0;
  for (const auto& c : candidates) {
    UnitEnergies e = unit_energy_terms(c.h_tilde, c.eta, c.consis, heads);
    const TypedSpan* hit = nullptr;
    for (const auto& ent : prediction.entities)
      if (ent.span == c.span) {
        hit = &ent;
        break;
      }
    if (hit)
      total += e.e_delta1_base + e.e_type[static_cast<std::size_t>(hit->type)];
    else
      total += e.e_delta0;
    total += e.unit_additive;
  }
  return total;
}

void save_scoring_heads(const ScoringHeads& h, const std::string& path) {
  json j;
  j["format"] = "saver-scoring-heads";
  j["version"] = 1;
  j["dim"] = h.dim;
  j["pair_dim"] = h.pair_dim;
  j["span_w0"] = h.span_w0;
  j["span_w1"] = h.span_w1;
  j["span_b0"] = h.span_b0;
  j["span_b1"] = h.span_b1;
  j["type_w"] = h.type_w;
  j["type_b"] = h.type_b;
  j["rel_w"] = h.rel_w;
  j["rel_b"] = h.rel_b;
  j["lambda_cons"] = h.lambda_cons;
  j["lambda_gate"] = h.lambda_gate;
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  os << j.dump() << "\n";
}

ScoringHeads load_scoring_heads(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  json j;
  is >> j;
  if (j.value("format", "") != "saver-scoring-heads")
    throw format_error("not a saver scoring-heads file: " + path);
  ScoringHeads h;
  h.dim = j.at("dim").get<std::size_t>();
  h.pair_dim = j.at("pair_dim").get<std::size_t>();
  h.span_w0 = j.at("span_w0").get<std::vector<double>>();
  h.span_w1 = j.at("span_w1").get<std::vector<double>>();
  h.span_b0 = j.at("span_b0").get<double>();
  h.span_b1 = j.at("span_b1").get<double>();
  h.type_w = j.at("type_w").get<std::vector<double>>();
  h.type_b = j.at("type_b").get<std::vector<double>>();
  h.rel_w = j.at("rel_w").get<std::vector<double>>();
  h.rel_b = j.at("rel_b").get<std::vector<double>>();
  h.lambda_cons = j.at("lambda_cons").get<double>();
  h.lambda_gate = j.at("lambda_gate").get<double>();
  return h;
}

}  // namespace saver
