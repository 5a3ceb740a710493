// saver: calibrated selective visual routing over embedding datasets.
//
// Subcommands: synth, calibrate, select, route, eval, cost. Every output
// artifact embeds a RunManifest record; all randomness flows from --seed.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saver/calibration.hpp"
#include "saver/dataset.hpp"
#include "saver/errors.hpp"
#include "saver/metrics.hpp"
#include "saver/pipeline.hpp"
#include "saver/selector.hpp"
#include "saver/synth.hpp"

using json = nlohmann::json;
using namespace saver;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr double kInf = std::numeric_limits<double>::infinity();

json make_manifest(const std::string& subcommand, const std::string& config,
                   const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, std::uint64_t seed,
                   const json& flags) {
  json m;
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["seed"] = seed;
  m["flags"] = flags;
  return json{{"saver_manifest", m}};
}

void write_json_artifact(const json& doc, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  os << doc.dump(2) << "\n";
}

json tau_to_json(double tau) {
  if (std::isinf(tau)) return tau > 0 ? json("inf") : json("-inf");
  return json(tau);
}

double tau_from_string(const std::string& s) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

// Shared routing/model flags.
struct RunFlags {
  std::string mode = "mner";
  std::string tau = "inf";
  std::size_t budget_k = 2;
  std::size_t k_regions = 3;
  double lambda_rel = 1.0;
  double lambda_cov = 1.0;
  double lambda_cons = 1.0;
  double lambda_gate = 1.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t n_types = 3;
  std::size_t n_relations = 3;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Task mode")
        ->check(CLI::IsMember({"mner", "mre"}));
    cmd->add_option("--tau", tau, "Gate threshold (number, inf or -inf)");
    cmd->add_option("--budget-k", budget_k, "Image budget K");
    cmd->add_option("--k-regions", k_regions, "Regions kept per image");
    cmd->add_option("--lambda-rel", lambda_rel, "Selector relevance weight");
    cmd->add_option("--lambda-cov", lambda_cov, "Selector coverage weight");
    cmd->add_option("--lambda-cons", lambda_cons, "Consistency energy weight");
    cmd->add_option("--lambda-gate", lambda_gate, "Gate energy weight");
    cmd->add_option("--seed", seed, "Model / generator seed");
    cmd->add_option("--jobs", jobs, "Worker threads (deterministic merge)");
    cmd->add_option("--n-types", n_types, "Entity type count");
    cmd->add_option("--n-relations", n_relations, "Relation label count");
  }

  json to_json() const {
    return json{{"mode", mode},
                {"tau", tau},
                {"budget_k", budget_k},
                {"k_regions", k_regions},
                {"lambda_rel", lambda_rel},
                {"lambda_cov", lambda_cov},
                {"lambda_cons", lambda_cons},
                {"lambda_gate", lambda_gate},
                {"seed", seed},
                {"jobs", jobs},
                {"n_types", n_types},
                {"n_relations", n_relations}};
  }

  PipelineConfig pipeline_config() const {
    PipelineConfig cfg;
    cfg.mode = mode == "mre" ? TaskMode::Mre : TaskMode::Mner;
    cfg.tau = tau_from_string(tau);
    cfg.budget_k = budget_k;
    cfg.k_regions = k_regions;
    cfg.sis.lambda_rel = lambda_rel;
    cfg.sis.lambda_cov = lambda_cov;
    cfg.jobs = jobs;
    return cfg;
  }

  PipelineModel model_for(const std::vector<Sample>& samples) const {
    if (samples.empty()) throw contract_error("dataset is empty");
    std::size_t dim = samples[0].tokens.dim;
    PipelineModel m = PipelineModel::seeded(dim, dim, n_types, n_relations, seed);
    m.heads.lambda_cons = lambda_cons;
    m.heads.lambda_gate = lambda_gate;
    return m;
  }
};

struct CostFlags {
  double f_text = 10.0;
  double f_vglob = 4.0;
  double f_vreg = 20.0;
  double f_fuse = 6.0;
  double f_head = 1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--f-text", f_text, "Text encoder cost");
    cmd->add_option("--f-vglob", f_vglob, "Global image feature cost");
    cmd->add_option("--f-vreg", f_vreg, "Region feature cost per image");
    cmd->add_option("--f-fuse", f_fuse, "Fusion cost per image");
    cmd->add_option("--f-head", f_head, "Decoder head cost");
  }

  CostConfig to_config() const {
    return CostConfig{f_text, f_vglob, f_vreg, f_fuse, f_head};
  }

  json to_json() const {
    return json{{"f_text", f_text},
                {"f_vglob", f_vglob},
                {"f_vreg", f_vreg},
                {"f_fuse", f_fuse},
                {"f_head", f_head}};
  }
};

// Per-unit loss against gold, mirroring the calibration loss definition.
std::optional<int> unit_loss(const UnitSpec& unit, const RoutedUnitTrace& t) {
  if (unit.kind == UnitKind::Span) {
    int delta = unit.gold ? 1 : 0;
    if (t.predicted_delta != delta) return 1;
    if (delta == 1 && t.predicted_label != *unit.gold) return 1;
    return 0;
  }
  if (!unit.gold) return std::nullopt;
  return t.predicted_label != *unit.gold ? 1 : 0;
}

json route_to_json(const std::vector<Sample>& samples,
                   const std::vector<SampleResult>& results) {
  json out = json::array();
  for (std::size_t si = 0; si < results.size(); ++si) {
    const auto& r = results[si];
    json js;
    js["id"] = r.sample_id;
    js["gamma_bar"] = r.gamma_bar;
    js["cost"] = r.measured_cost;
    js["entities"] = json::array();
    for (const auto& e : r.entities.entities)
      js["entities"].push_back(
          {{"span", {e.span.a, e.span.b}}, {"type", e.type}});
    js["relations"] = r.relations;
    js["units"] = json::array();
    for (const auto& t : r.traces) {
      json ju;
      ju["unit_index"] = t.unit_index;
      ju["g"] = t.g;
      ju["gamma"] = t.gamma;
      ju["chosen_images"] = t.chosen_images;
      ju["predicted_delta"] = t.predicted_delta;
      ju["predicted_label"] = t.predicted_label;
      auto loss = unit_loss(samples[si].units[t.unit_index], t);
      if (loss)
        ju["loss"] = *loss;
      else
        ju["loss"] = nullptr;
      js["units"].push_back(ju);
    }
    out.push_back(js);
  }
  return out;
}

int run_synth(const std::string& config, const std::string& out,
              const std::string& truth_out, const std::string& matrix_dir,
              const WorldConfig& wc) {
  World w = generate_world(wc);
  json flags{{"n_samples", wc.n_samples},
             {"units_per_sample", wc.units_per_sample},
             {"min_images", wc.min_images},
             {"max_images", wc.max_images},
             {"dim", wc.dim},
             {"groundable_fraction", wc.groundable_fraction},
             {"noise_scale", wc.noise_scale},
             {"relevance_gap", wc.relevance_gap},
             {"error_rate_groundable", wc.error_rate_groundable},
             {"error_rate_ungroundable", wc.error_rate_ungroundable}};
  json manifest =
      make_manifest("synth", config, {}, {out, truth_out}, wc.seed, flags);
  write_dataset(w.samples, out, matrix_dir, manifest.dump());
  if (!truth_out.empty()) write_truth(w.truth, truth_out, manifest.dump());
  return 0;
}

std::vector<std::pair<double, int>> read_score_loss(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  char first = static_cast<char>(is.peek());
  std::vector<std::pair<double, int>> pairs;
  if (first == '{') {
    json doc = json::parse(is);
    if (!doc.contains("samples"))
      throw format_error("routed artifact missing \"samples\": " + path);
    for (const auto& s : doc.at("samples"))
      for (const auto& u : s.at("units")) {
        if (u.at("loss").is_null())
          throw format_error("unit without gold loss in " + path);
        pairs.emplace_back(u.at("g").get<double>(), u.at("loss").get<int>());
      }
    return pairs;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double score;
    int loss;
    if (!(ls >> score >> loss) || (loss != 0 && loss != 1))
      throw format_error("line " + std::to_string(line_no) +
                         ": expected \"score loss01\"");
    pairs.emplace_back(score, loss);
  }
  return pairs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saver: calibrated selective visual routing"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "Structured-text config; flags override it");
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic world");
  WorldConfig wc;
  std::string synth_out, synth_truth, synth_mdir = "matrices";
  synth->add_option("--out", synth_out, "Dataset output path")->required();
  synth->add_option("--truth", synth_truth, "Truth sidecar output path");
  synth->add_option("--matrix-dir", synth_mdir,
                    "Sidecar matrix directory (relative to --out)");
  synth->add_option("--n-samples", wc.n_samples, "Sample count");
  synth->add_option("--units-per-sample", wc.units_per_sample, "Units each");
  synth->add_option("--min-images", wc.min_images, "Minimum images");
  synth->add_option("--max-images", wc.max_images, "Maximum images");
  synth->add_option("--dim", wc.dim, "Embedding dimension");
  synth->add_option("--groundable-fraction", wc.groundable_fraction,
                    "Fraction of groundable units");
  synth->add_option("--noise-scale", wc.noise_scale, "Vector noise scale");
  synth->add_option("--relevance-gap", wc.relevance_gap,
                    "Groundable / distractor alignment gap");
  synth->add_option("--error-groundable", wc.error_rate_groundable,
                    "Loss probability, groundable units");
  synth->add_option("--error-ungroundable", wc.error_rate_ungroundable,
                    "Loss probability, ungroundable units");
  synth->add_option("--seed", wc.seed, "World seed");

  // --- calibrate ---
  auto* calibrate = app.add_subcommand(
      "calibrate", "Select the gate threshold from (score, loss) pairs");
  std::string cal_in, cal_out;
  double cal_alpha = 0.10, cal_delta = 0.05;
  std::uint64_t cal_seed = 0;
  calibrate->add_option("--scores", cal_in,
                        "Two-column \"score loss\" file or routed artifact")
      ->required();
  calibrate->add_option("--out", cal_out, "Output path (default stdout)");
  calibrate->add_option("--alpha", cal_alpha, "Target selective risk");
  calibrate->add_option("--delta", cal_delta, "Confidence budget (1 - conf)");
  calibrate->add_option("--seed", cal_seed, "Recorded in the manifest");

  // --- select ---
  auto* select = app.add_subcommand(
      "select", "Evidence selection for one unit of one sample");
  std::string sel_data, sel_sample, sel_out;
  std::size_t sel_unit = 0;
  RunFlags sel_flags;
  select->add_option("--data", sel_data, "Dataset path")->required();
  select->add_option("--sample", sel_sample, "Sample id")->required();
  select->add_option("--unit", sel_unit, "Unit index within the sample");
  select->add_option("--out", sel_out, "Output path (default stdout)");
  sel_flags.attach(select);

  // --- route ---
  auto* route = app.add_subcommand("route", "Run the selective pipeline");
  std::string route_data, route_out;
  RunFlags route_flags;
  CostFlags route_cost;
  route->add_option("--data", route_data, "Dataset path")->required();
  route->add_option("--out", route_out, "Output path (default stdout)");
  route_flags.attach(route);
  route_cost.attach(route);

  // --- eval ---
  auto* eval = app.add_subcommand(
      "eval", "Metrics and risk-coverage curves for a routed artifact");
  std::string eval_pred, eval_data, eval_out, eval_curve;
  double eval_alpha = 0.10;
  std::uint64_t eval_seed = 0;
  eval->add_option("--pred", eval_pred, "Routed artifact path")->required();
  eval->add_option("--data", eval_data, "Gold dataset path")->required();
  eval->add_option("--out", eval_out, "Output path (default stdout)");
  eval->add_option("--curve-out", eval_curve,
                   "Two-column coverage/risk curve file");
  eval->add_option("--alpha", eval_alpha, "Alpha for ActCov@alpha");
  eval->add_option("--seed", eval_seed, "Recorded in the manifest");

  // --- cost ---
  auto* cost = app.add_subcommand("cost", "Cost-model sweep over gamma_bar");
  std::string cost_out, cost_curve;
  std::size_t cost_k = 2, cost_steps = 11;
  std::uint64_t cost_seed = 0;
  CostFlags cost_flags;
  cost->add_option("--out", cost_out, "Output path (default stdout)");
  cost->add_option("--curve-out", cost_curve, "Two-column gamma/cost file");
  cost->add_option("--budget-k", cost_k, "Image budget K");
  cost->add_option("--steps", cost_steps, "Sweep points over [0, 1]");
  cost->add_option("--seed", cost_seed, "Recorded in the manifest");
  cost_flags.attach(cost);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const CLI::Option* config_opt = app.get_config_ptr();
  const std::string config = config_opt && config_opt->count()
                                 ? config_opt->as<std::string>()
                                 : std::string{};

  try {
    if (synth->parsed())
      return run_synth(config, synth_out, synth_truth, synth_mdir, wc);

    if (calibrate->parsed()) {
      auto pairs = read_score_loss(cal_in);
      CalibrationInput in;
      in.alpha = cal_alpha;
      in.delta = cal_delta;
      for (const auto& [s, l] : pairs) {
        in.scores.push_back(s);
        in.losses.push_back(l);
      }
      auto res = calibrate_threshold(in);
      json doc = make_manifest("calibrate", config, {cal_in}, {cal_out},
                               cal_seed,
                               {{"alpha", cal_alpha}, {"delta", cal_delta}});
      doc["result"] = {{"tau", tau_to_json(res.tau)},
                       {"feasible", res.feasible},
                       {"n", res.n},
                       {"k", res.k},
                       {"cp_bound", res.cp_bound},
                       {"coverage", res.coverage}};
      write_json_artifact(doc, cal_out);
      return 0;
    }

    if (select->parsed()) {
      auto samples = load_dataset(sel_data);
      auto model = sel_flags.model_for(samples);
      const Sample* sample = nullptr;
      for (const auto& s : samples)
        if (s.id == sel_sample) sample = &s;
      if (!sample) throw contract_error("unknown sample id: " + sel_sample);
      if (sel_unit >= sample->units.size())
        throw contract_error("unit index out of range");
      const UnitSpec& unit = sample->units[sel_unit];

      std::vector<float> q;
      if (unit.kind == UnitKind::Span) {
        q = model.ent_proj.apply(
            span_rep(sample->tokens, unit.span.a, unit.span.b, model.span_proj));
      } else {
        auto hh = span_rep(sample->tokens, unit.head.a, unit.head.b,
                           model.span_proj);
        auto ht = span_rep(sample->tokens, unit.tail.a, unit.tail.b,
                           model.span_proj);
        std::vector<float> u(hh);
        u.insert(u.end(), ht.begin(), ht.end());
        auto dist = pair_dist_features(unit.head, unit.tail,
                                       sample->tokens.rows);
        u.insert(u.end(), dist.begin(), dist.end());
        q = model.pair_proj.apply(u);
      }
      std::vector<std::vector<float>> globals;
      for (const auto& im : sample->images) globals.push_back(im.global_vec);
      if (globals.empty())
        throw contract_error("sample has no images to select from");
      auto bundle = similarity_bundle(q, globals);
      SisWeights w{sel_flags.lambda_rel, sel_flags.lambda_cov};
      auto sel = greedy_select(bundle, w, sel_flags.budget_k);

      json doc = make_manifest("select", config, {sel_data}, {sel_out},
                               sel_flags.seed, sel_flags.to_json());
      json chosen = json::array();
      for (std::size_t idx : sel.chosen)
        chosen.push_back(sample->images[idx].image_id);
      doc["result"] = {{"sample", sel_sample},
                       {"unit", sel_unit},
                       {"chosen_images", chosen},
                       {"gains", sel.gains},
                       {"objective", sel.objective}};
      write_json_artifact(doc, sel_out);
      return 0;
    }

    if (route->parsed()) {
      auto samples = load_dataset(route_data);
      auto model = route_flags.model_for(samples);
      PipelineConfig cfg = route_flags.pipeline_config();
      cfg.cost = route_cost.to_config();
      auto results = route_dataset(samples, model, cfg);

      json flags = route_flags.to_json();
      flags["cost"] = route_cost.to_json();
      json doc = make_manifest("route", config, {route_data}, {route_out},
                               route_flags.seed, flags);
      doc["samples"] = route_to_json(samples, results);
      double gsum = 0.0, csum = 0.0;
      for (const auto& r : results) {
        gsum += r.gamma_bar;
        csum += r.measured_cost;
      }
      doc["mean_gamma_bar"] = results.empty() ? 0.0 : gsum / results.size();
      doc["mean_cost"] = results.empty() ? 0.0 : csum / results.size();
      write_json_artifact(doc, route_out);
      return 0;
    }

    if (eval->parsed()) {
      auto samples = load_dataset(eval_data);
      std::ifstream is(eval_pred);
      if (!is) throw io_error("cannot open: " + eval_pred);
      json pred = json::parse(is);
      if (!pred.contains("samples"))
        throw format_error("routed artifact missing \"samples\"");

      std::vector<double> scores;
      std::vector<int> losses;
      std::size_t tp = 0, n_pred = 0, n_gold = 0;
      std::vector<int> rel_pred, rel_gold;

      for (const auto& js : pred.at("samples")) {
        const std::string id = js.at("id").get<std::string>();
        const Sample* gold = nullptr;
        for (const auto& s : samples)
          if (s.id == id) gold = &s;
        if (!gold) throw contract_error("prediction for unknown sample " + id);

        for (const auto& u : js.at("units"))
          if (!u.at("loss").is_null()) {
            scores.push_back(u.at("g").get<double>());
            losses.push_back(u.at("loss").get<int>());
          }

        // Strict-match entity micro counts against gold span units.
        std::vector<TypedSpan> gold_ents;
        std::size_t pair_i = 0;
        for (const auto& unit : gold->units) {
          if (unit.kind == UnitKind::Span && unit.gold)
            gold_ents.push_back({unit.span, *unit.gold});
          if (unit.kind == UnitKind::Pair) {
            rel_gold.push_back(*unit.gold);
            const auto& rels = js.at("relations");
            rel_pred.push_back(pair_i < rels.size()
                                   ? rels[pair_i].get<int>()
                                   : 0);
            ++pair_i;
          }
        }
        n_gold += gold_ents.size();
        for (const auto& je : js.at("entities")) {
          TypedSpan e{{je.at("span")[0].get<std::size_t>(),
                       je.at("span")[1].get<std::size_t>()},
                      je.at("type").get<int>()};
          ++n_pred;
          for (const auto& g : gold_ents)
            if (e == g) {
              ++tp;
              break;
            }
        }
      }

      json doc = make_manifest("eval", config, {eval_pred, eval_data},
                               {eval_out, eval_curve}, eval_seed,
                               {{"alpha", eval_alpha}});
      if (!scores.empty()) {
        auto curve = risk_coverage(scores, losses);
        doc["aurc"] = aurc(curve);
        doc["act_cov"] = act_cov_at(curve, eval_alpha);
        doc["alpha"] = eval_alpha;
        if (!eval_curve.empty()) {
          std::ofstream cs(eval_curve);
          if (!cs) throw io_error("cannot open for write: " + eval_curve);
          cs << "# coverage risk\n";
          for (const auto& p : curve.points)
            cs << p.coverage << " " << p.risk << "\n";
        }
      }
      double prec = n_pred ? static_cast<double>(tp) / n_pred
                           : (n_gold ? 0.0 : 1.0);
      double rec = n_gold ? static_cast<double>(tp) / n_gold
                          : (n_pred ? 0.0 : 1.0);
      double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec)
                                 : (n_pred + n_gold == 0 ? 1.0 : 0.0);
      doc["entity"] = {{"precision", prec}, {"recall", rec}, {"f1", f1}};
      if (!rel_gold.empty()) {
        auto pr = relation_micro_f1(rel_pred, rel_gold);
        doc["relation"] = {{"precision", pr.precision},
                           {"recall", pr.recall},
                           {"f1", pr.f1}};
      }
      write_json_artifact(doc, eval_out);
      return 0;
    }

    if (cost->parsed()) {
      if (cost_steps < 2) throw contract_error("--steps must be >= 2");
      CostConfig cc = cost_flags.to_config();
      json flags = cost_flags.to_json();
      flags["budget_k"] = cost_k;
      flags["steps"] = cost_steps;
      json doc =
          make_manifest("cost", config, {}, {cost_out, cost_curve}, cost_seed,
                        flags);
      json sweep = json::array();
      std::ofstream cs;
      if (!cost_curve.empty()) {
        cs.open(cost_curve);
        if (!cs) throw io_error("cannot open for write: " + cost_curve);
        cs << "# gamma_bar cost\n";
      }
      for (std::size_t i = 0; i < cost_steps; ++i) {
        double g = static_cast<double>(i) / static_cast<double>(cost_steps - 1);
        double c = estimate_cost(cc, g, cost_k);
        sweep.push_back({{"gamma_bar", g}, {"cost", c}});
        if (cs.is_open()) cs << g << " " << c << "\n";
      }
      doc["sweep"] = sweep;
      write_json_artifact(doc, cost_out);
      return 0;
    }
  } catch (const contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
