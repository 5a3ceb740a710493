#include "saver/pipeline.hpp"

#include <cmath>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "saver/errors.hpp"

namespace saver {

namespace {

std::vector<std::vector<float>> collect_globals(const Sample& s) {
  std::vector<std::vector<float>> g;
  g.reserve(s.images.size());
  for (const auto& im : s.images) g.push_back(im.global_vec);
  return g;
}

// Image-image similarities are query-independent; computed once per sample
// and shared across activated units.
struct EvidenceCache {
  std::optional<std::vector<double>> pair_cos;  // row-major N x N

  const std::vector<double>& get(const std::vector<std::vector<float>>& globals) {
    if (!pair_cos) {
      const std::size_t n = globals.size();
      std::vector<double> d(n * n, 1.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          double c = cosine(globals[i], globals[j]);
          d[i * n + j] = c;
          d[j * n + i] = c;
        }
      pair_cos = std::move(d);
    }
    return *pair_cos;
  }
};

struct VisualResult {
  EvidenceSelection selection;
  std::optional<std::vector<float>> z_set;
  std::size_t region_reads = 0;
};

VisualResult run_visual_branch(const std::vector<float>& q, const Sample& sample,
                               const std::vector<std::vector<float>>& globals,
                               EvidenceCache& cache, const PipelineModel& model,
                               const PipelineConfig& cfg) {
  VisualResult out;
  const std::size_t n = globals.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = cosine(q, globals[i]);
  SimilarityBundle bundle = rescale(r, cache.get(globals));
  out.selection = greedy_select(bundle, cfg.sis, cfg.budget_k);
  std::size_t before = RegionStore::read_count();
  auto evidence =
      build_evidence_set(q, out.selection, sample.images, cfg.k_regions);
  out.region_reads = RegionStore::read_count() - before;
  if (!evidence.empty()) out.z_set = set_encode(evidence, model.set_encoder);
  return out;
}

}  // namespace

PipelineModel PipelineModel::seeded(std::size_t token_dim,
                                    std::size_t common_dim, std::size_t n_types,
                                    std::size_t n_relations,
                                    std::uint64_t seed) {
  PipelineModel m;
  m.token_dim = token_dim;
  m.common_dim = common_dim;

  // Averaging span projection: h_s = ([start] + [end] + [mean]) / 3.
  m.span_proj.dim_in = 3 * token_dim;
  m.span_proj.dim_out = token_dim;
  m.span_proj.weight.assign(token_dim * 3 * token_dim, 0.0);
  for (std::size_t i = 0; i < token_dim; ++i)
    for (std::size_t blk = 0; blk < 3; ++blk)
      m.span_proj.weight[i * 3 * token_dim + blk * token_dim + i] = 1.0 / 3.0;
  m.span_proj.bias.assign(token_dim, 0.0);

  m.ent_proj = common_dim == token_dim
                   ? ProjectionHead::identity(token_dim)
                   : ProjectionHead::seeded(token_dim, common_dim, seed + 1);
  m.pair_proj =
      ProjectionHead::seeded(2 * token_dim + 3, common_dim, seed + 2);
  m.fuse_span =
      ProjectionHead::seeded(token_dim + common_dim, token_dim, seed + 3);
  m.fuse_pair = ProjectionHead::seeded(2 * token_dim + 3 + common_dim,
                                       2 * token_dim + 3, seed + 4);
  std::size_t heads = common_dim % 4 == 0 ? 4 : (common_dim % 2 == 0 ? 2 : 1);
  m.set_encoder =
      SetEncoderWeights::seeded(common_dim, heads, 2 * common_dim, seed + 5);
  m.heads = ScoringHeads::seeded(token_dim, 2 * token_dim + 3, n_types,
                                 n_relations, seed + 6);

  // Gate on psi_max only: g = sigma(6 (psi_max - 0.4)).
  m.gate.weights.assign(token_dim + kGateFeatureCount, 0.0);
  m.gate.weights[token_dim] = 6.0;
  m.gate.bias = -2.4;
  return m;
}

SampleResult route_sample(const Sample& sample, const PipelineModel& model,
                          const PipelineConfig& cfg) {
  SampleResult res;
  res.sample_id = sample.id;
  auto globals = collect_globals(sample);
  EvidenceCache cache;

  std::vector<CandidateSpan> candidates;
  std::size_t activated = 0;

  for (std::size_t ui = 0; ui < sample.units.size(); ++ui) {
    const UnitSpec& unit = sample.units[ui];
    RoutedUnitTrace trace;
    trace.unit_index = ui;

    if (unit.kind == UnitKind::Span) {
      auto h = span_rep(sample.tokens, unit.span.a, unit.span.b, model.span_proj);
      auto q = model.ent_proj.apply(h);
      GateFeatures feats = groundability_features(q, globals);
      trace.g = gate_score(model.gate, h, feats);
      trace.gamma = feats.no_image ? 0 : hard_gate(trace.g, cfg.tau);

      std::vector<float> h_tilde = h;
      if (trace.gamma) {
        auto vis = run_visual_branch(q, sample, globals, cache, model, cfg);
        trace.region_reads = vis.region_reads;
        for (std::size_t idx : vis.selection.chosen)
          trace.chosen_images.push_back(sample.images[idx].image_id);
        if (vis.z_set) {
          trace.eta = trace.g;  // test mode: eta = g * gamma, gamma = 1
          h_tilde = fuse(h, *vis.z_set, trace.eta, model.fuse_span);
          trace.consis = consistency(model.ent_proj, h_tilde, vis.z_set);
        }
        ++activated;
      }
      CandidateSpan c;
      c.span = unit.span;
      c.h_tilde = h_tilde;
      c.eta = trace.eta;
      c.consis = trace.consis;
      candidates.push_back(c);

      UnitEnergies e =
          unit_energy_terms(h_tilde, trace.eta, trace.consis, model.heads);
      trace.predicted_delta = e.best_typed_energy < e.e_delta0 ? 1 : 0;
      trace.predicted_label = trace.predicted_delta ? e.best_type : -1;
    } else {
      auto h_head =
          span_rep(sample.tokens, unit.head.a, unit.head.b, model.span_proj);
      auto h_tail =
          span_rep(sample.tokens, unit.tail.a, unit.tail.b, model.span_proj);
      std::vector<float> u;
      u.reserve(model.pair_dim());
      u.insert(u.end(), h_head.begin(), h_head.end());
      u.insert(u.end(), h_tail.begin(), h_tail.end());
      auto dist =
          pair_dist_features(unit.head, unit.tail, sample.tokens.rows);
      u.insert(u.end(), dist.begin(), dist.end());

      auto q_head = model.ent_proj.apply(h_head);
      auto q_tail = model.ent_proj.apply(h_tail);
      GateFeatures f_head = groundability_features(q_head, globals);
      GateFeatures f_tail = groundability_features(q_tail, globals);
      double g_head = gate_score(model.gate, h_head, f_head);
      double g_tail = gate_score(model.gate, h_tail, f_tail);
      trace.g = pair_gate(g_head, g_tail);
      trace.gamma = f_head.no_image ? 0 : hard_gate(trace.g, cfg.tau);

      std::vector<float> u_tilde = u;
      if (trace.gamma) {
        auto q_pair = model.pair_proj.apply(u);
        auto vis = run_visual_branch(q_pair, sample, globals, cache, model, cfg);
        trace.region_reads = vis.region_reads;
        for (std::size_t idx : vis.selection.chosen)
          trace.chosen_images.push_back(sample.images[idx].image_id);
        if (vis.z_set) {
          trace.eta = trace.g;
          u_tilde = fuse(u, *vis.z_set, trace.eta, model.fuse_pair);
          trace.consis = consistency(model.pair_proj, u_tilde, vis.z_set);
        }
        ++activated;
      }
      int rel = re_predict(u_tilde, trace.eta, trace.consis, model.heads);
      trace.predicted_delta = 1;
      trace.predicted_label = rel;
      res.relations.push_back(rel);
    }
    res.traces.push_back(std::move(trace));
  }

  if (!candidates.empty()) res.entities = ner_decode(candidates, model.heads);

  res.gamma_bar = sample.units.empty()
                      ? 0.0
                      : static_cast<double>(activated) /
                            static_cast<double>(sample.units.size());
  res.measured_cost = estimate_cost(cfg.cost, res.gamma_bar, cfg.budget_k);
  return res;
}

std::vector<SampleResult> route_dataset(const std::vector<Sample>& samples,
                                        const PipelineModel& model,
                                        const PipelineConfig& cfg) {
  std::vector<SampleResult> out(samples.size());
  const int jobs = cfg.jobs > 0 ? static_cast<int>(cfg.jobs) : 1;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size());
       ++i)
    out[static_cast<std::size_t>(i)] =
        route_sample(samples[static_cast<std::size_t>(i)], model, cfg);
  return out;
}

std::vector<std::pair<double, int>> record_forced_on_losses(
    const std::vector<Sample>& samples, const PipelineModel& model,
    const PipelineConfig& cfg) {
  PipelineConfig forced = cfg;
  forced.tau = -std::numeric_limits<double>::infinity();  // g >= tau always
  std::vector<std::pair<double, int>> out;
  for (const auto& sample : samples) {
    SampleResult res = route_sample(sample, model, forced);
    for (std::size_t ui = 0; ui < sample.units.size(); ++ui) {
      const UnitSpec& unit = sample.units[ui];
      const RoutedUnitTrace& trace = res.traces[ui];
      if (!unit.gold && unit.kind == UnitKind::Pair)
        throw contract_error("record_forced_on_losses: pair without gold");
      int loss;
      if (unit.kind == UnitKind::Span) {
        int delta = unit.gold ? 1 : 0;
        int delta_hat = trace.predicted_delta;
        if (delta_hat != delta)
          loss = 1;
        else if (delta == 1 && trace.predicted_label != *unit.gold)
          loss = 1;
        else
          loss = 0;
      } else {
        if (!unit.gold)
          throw contract_error("record_forced_on_losses: missing gold");
        loss = trace.predicted_label != *unit.gold ? 1 : 0;
      }
      out.emplace_back(trace.g, loss);
    }
  }
  return out;
}

}  // namespace saver
