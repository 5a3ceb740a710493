#include <doctest.h>

#include <algorithm>
#include <random>

#include "saver/errors.hpp"
#include "saver/scoring.hpp"

using namespace saver;

namespace {

// Heads with zero span/type weights and chosen biases, so fixtures can pin
// energies exactly. dim 1, two types.
ScoringHeads fixture_heads(double b0, double b1, double t0, double t1) {
  ScoringHeads h;
  h.dim = 1;
  h.pair_dim = 1;
  h.span_w0 = {0.0};
  h.span_w1 = {0.0};
  h.span_b0 = b0;
  h.span_b1 = b1;
  h.type_w = {0.0, 0.0};
  h.type_b = {t0, t1};
  h.rel_w = {0.0, 0.0, 0.0};
  h.rel_b = {0.4, 0.1, 0.9};
  return h;
}

CandidateSpan cand(std::size_t a, std::size_t b, double eta = 0.0,
                   double consis = 0.0) {
  CandidateSpan c;
  c.span = {a, b};
  c.h_tilde = {0.0f};
  c.eta = eta;
  c.consis = consis;
  return c;
}

}  // namespace

TEST_CASE("unit energy terms: eta = 0 removes consistency and gate terms") {
  auto h = fixture_heads(0.5, 0.2, 0.1, 0.3);
  auto e = unit_energy_terms({0.0f}, 0.0, 0.9, h);
  CHECK(e.unit_additive == 0.0);
  CHECK(e.e_delta0 == doctest::Approx(0.5));
  CHECK(e.best_typed_energy == doctest::Approx(0.3));  // 0.2 + 0.1
  CHECK(e.best_type == 0);
}

TEST_CASE("unit energy additive term: -consis plus gate charge") {
  auto h = fixture_heads(0, 0, 0, 0);
  h.lambda_cons = 1.0;
  h.lambda_gate = 0.25;
  auto e = unit_energy_terms({0.0f}, 1.0, 0.8, h);
  CHECK(e.unit_additive == doctest::Approx(-0.8 + 0.25));
}

TEST_CASE("zero heads tie: strict admissibility keeps nothing") {
  auto h = fixture_heads(0, 0, 0, 0);
  auto pred = ner_decode({cand(0, 1), cand(2, 3)}, h);
  CHECK(pred.entities.empty());
}

TEST_CASE("greedy non-overlap decoding on the 3-candidate fixture") {
  // Admissible energies: (0,1) -> 0.2, (0,2) -> 0.3, (1,2) -> 0.5.
  // delta0 high so all are admissible.
  ScoringHeads h = fixture_heads(10.0, 0.0, 0.0, 5.0);
  auto c1 = cand(0, 1);
  auto c2 = cand(0, 2);
  auto c3 = cand(1, 2);
  // Use eta as a per-candidate energy offset through lambda_gate = 1.
  h.lambda_cons = 0.0;
  h.lambda_gate = 1.0;
  c1.eta = 0.2;
  c2.eta = 0.3;
  c3.eta = 0.5;
  auto pred = ner_decode({c3, c1, c2}, h);  // order must not matter
  REQUIRE(pred.entities.size() == 1);
  CHECK(pred.entities[0].span == Span{0, 1});
  CHECK(pred.entities[0].type == 0);
}

TEST_CASE("disjoint admissible spans are both kept") {
  ScoringHeads h = fixture_heads(10.0, 0.0, 0.0, 5.0);
  auto pred = ner_decode({cand(3, 4), cand(0, 1)}, h);
  CHECK(pred.entities.size() == 2);
}

TEST_CASE("candidates over the max span length are rejected") {
  ScoringHeads h = fixture_heads(1, 0, 0, 0);
  CHECK_THROWS_AS(ner_decode({cand(0, 10)}, h), contract_error);
}

TEST_CASE("decoded spans never overlap and decoding is order invariant") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> val(0.0, 1.0);
  for (int it = 0; it < 300; ++it) {
    ScoringHeads h = ScoringHeads::seeded(2, 2, 3, 2, rng());
    std::vector<CandidateSpan> cands;
    std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      CandidateSpan c;
      std::size_t a = rng() % 12;
      c.span = {a, a + rng() % 3};
      c.h_tilde = {static_cast<float>(val(rng)), static_cast<float>(val(rng))};
      c.eta = (rng() % 2) ? 0.7 : 0.0;
      c.consis = val(rng) / 2.0;
      cands.push_back(c);
    }
    auto pred = ner_decode(cands, h);
    for (std::size_t i = 0; i < pred.entities.size(); ++i)
      for (std::size_t j = i + 1; j < pred.entities.size(); ++j) {
        const auto& x = pred.entities[i].span;
        const auto& y = pred.entities[j].span;
        CHECK_FALSE((x.a <= y.b && y.a <= x.b));
      }
    std::shuffle(cands.begin(), cands.end(), rng);
    auto again = ner_decode(cands, h);
    CHECK(again.entities == pred.entities);
  }
}

TEST_CASE("re_predict fixtures and invariance to eta and consis") {
  auto h = fixture_heads(0, 0, 0, 0);  // rel biases {0.4, 0.1, 0.9}
  CHECK(re_predict({0.0f}, 0.0, 0.0, h) == 1);
  CHECK(re_predict({0.0f}, 1.0, 0.9, h) == 1);
  CHECK(re_predict({0.0f}, 0.3, -0.5, h) == 1);

  ScoringHeads single = h;
  single.rel_w = {0.0};
  single.rel_b = {2.0};
  CHECK(re_predict({0.0f}, 0.5, 0.1, single) == 0);

  ScoringHeads zero = h;
  zero.rel_b = {0.0, 0.0, 0.0};
  CHECK(re_predict({0.0f}, 0.0, 0.0, zero) == 0);  // tie -> lowest id
}

TEST_CASE("re_predict invariance on random heads") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    ScoringHeads h = ScoringHeads::seeded(2, 3, 2, 4, rng());
    std::vector<float> u{0.3f, -0.2f, 1.1f};
    int base = re_predict(u, 0.0, 0.0, h);
    CHECK(re_predict(u, uni(rng), uni(rng) * 2 - 1, h) == base);
    h.lambda_gate = uni(rng) * 3;
    h.lambda_cons = uni(rng) * 3;
    CHECK(re_predict(u, uni(rng), uni(rng) * 2 - 1, h) == base);
  }
}

TEST_CASE("total energy: empty prediction with zero heads and eta") {
  auto h = fixture_heads(0, 0, 0, 0);
  CHECK(total_energy({cand(0, 1), cand(2, 2)}, EntityPrediction{}, h) == 0.0);
}

TEST_CASE("total energy matches hand arithmetic on a 2-candidate fixture") {
  auto h = fixture_heads(0.5, 0.2, 0.1, 0.3);
  auto c1 = cand(0, 1);
  auto c2 = cand(2, 3);
  EntityPrediction pred;
  pred.entities.push_back({{0, 1}, 1});
  // c1 selected with type 1: 0.2 + 0.3; c2 rejected: 0.5. Additives zero.
  CHECK(total_energy({c1, c2}, pred, h) == doctest::Approx(1.0));
}

TEST_CASE("activated unit with consis = 1 and unit lambdas cancels exactly") {
  auto h = fixture_heads(0.5, 0.2, 0.1, 0.3);
  h.lambda_cons = 1.0;
  h.lambda_gate = 1.0;
  auto base = total_energy({cand(0, 1)}, EntityPrediction{}, h);
  auto activated = total_energy({cand(0, 1, 1.0, 1.0)}, EntityPrediction{}, h);
  CHECK(activated == doctest::Approx(base));
}

TEST_CASE("lowering an accepted item's energy keeps it accepted") {
  ScoringHeads h = fixture_heads(10.0, 0.0, 0.0, 5.0);
  h.lambda_gate = 1.0;
  auto c1 = cand(0, 1);
  c1.eta = 0.2;
  auto c2 = cand(3, 4);
  c2.eta = 0.4;
  auto pred = ner_decode({c1, c2}, h);
  REQUIRE(pred.entities.size() == 2);
  c1.eta = 0.05;  // lower its energy further
  auto again = ner_decode({c1, c2}, h);
  bool kept = false;
  for (const auto& e : again.entities)
    if (e.span == Span{0, 1}) kept = true;
  CHECK(kept);
}

TEST_CASE("scoring heads file round trip") {
  auto h = ScoringHeads::seeded(3, 4, 2, 5, 77);
  save_scoring_heads(h, "/tmp/saver_heads.json");
  auto back = load_scoring_heads("/tmp/saver_heads.json");
  CHECK(back.type_w == h.type_w);
  CHECK(back.rel_b == h.rel_b);
  CHECK(back.lambda_cons == h.lambda_cons);
}
