#include "saver/set_encoder.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "saver/errors.hpp"

namespace saver {

using nlohmann::json;

namespace {

std::vector<double> seeded_matrix(std::size_t rows, std::size_t cols,
                                  std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> m(rows * cols);
  for (auto& x : m) x = dist(rng);
  return m;
}

// y = W x, W row-major (rows x cols), x length cols.
std::vector<double> matvec(const std::vector<double>& w, std::size_t rows,
                           std::size_t cols, const std::vector<double>& x) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * x[j];
    y[i] = acc;
  }
  return y;
}

void layer_norm(std::vector<double>& x, const std::vector<double>& scale,
                const std::vector<double>& shift) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  double inv = 1.0 / std::sqrt(var + 1e-6);
  for (std::size_t i = 0; i < d; ++i)
    x[i] = scale[i] * (x[i] - mean) * inv + shift[i];
}

// Multihead attention of one query row over a set of key/value rows.
// q, keys, vals are pre-projection inputs; projections passed per role.
std::vector<double> multihead(const std::vector<double>& query,
                              const std::vector<std::vector<double>>& context,
                              const std::vector<double>& wq,
                              const std::vector<double>& wk,
                              const std::vector<double>& wv,
                              const std::vector<double>& wo, std::size_t dim,
                              std::size_t heads) {
  const std::size_t dh = dim / heads;
  std::vector<double> qp = matvec(wq, dim, dim, query);
  std::vector<std::vector<double>> kp, vp;
  kp.reserve(context.size());
  vp.reserve(context.size());
  for (const auto& c : context) {
    kp.push_back(matvec(wk, dim, dim, c));
    vp.push_back(matvec(wv, dim, dim, c));
  }
  std::vector<double> concat(dim, 0.0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    std::vector<double> logits(context.size());
    double max_logit = -1e300;
    for (std::size_t t = 0; t < context.size(); ++t) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dh; ++j) dot += qp[off + j] * kp[t][off + j];
      logits[t] = dot * inv_sqrt;
      max_logit = std::max(max_logit, logits[t]);
    }
    double denom = 0.0;
    for (std::size_t t = 0; t < context.size(); ++t) {
      logits[t] = std::exp(logits[t] - max_logit);
      denom += logits[t];
    }
    for (std::size_t t = 0; t < context.size(); ++t) {
      double a = logits[t] / denom;
      for (std::size_t j = 0; j < dh; ++j) concat[off + j] += a * vp[t][off + j];
    }
  }
  return matvec(wo, dim, dim, concat);
}

}  // namespace

std::vector<float> ProjectionHead::apply(std::span<const float> x) const {
  if (x.size() != dim_in)
    throw contract_error("ProjectionHead: input dim mismatch");
  std::vector<float> y(dim_out);
  for (std::size_t i = 0; i < dim_out; ++i) {
    double acc = bias[i];
    for (std::size_t j = 0; j < dim_in; ++j) acc += weight[i * dim_in + j] * x[j];
    y[i] = static_cast<float>(acc);
  }
  return y;
}

ProjectionHead ProjectionHead::identity(std::size_t d) {
  ProjectionHead p;
  p.dim_in = p.dim_out = d;
  p.weight.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) p.weight[i * d + i] = 1.0;
  p.bias.assign(d, 0.0);
  return p;
}

ProjectionHead ProjectionHead::seeded(std::size_t dim_in, std::size_t dim_out,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProjectionHead p;
  p.dim_in = dim_in;
  p.dim_out = dim_out;
  p.weight = seeded_matrix(dim_out, dim_in, rng,
                           1.0 / std::sqrt(static_cast<double>(dim_in)));
  p.bias.assign(dim_out, 0.0);
  return p;
}

SetEncoderWeights SetEncoderWeights::seeded(std::size_t dim, std::size_t heads,
                                            std::size_t ff_dim,
                                            std::uint64_t seed) {
  if (heads == 0 || dim % heads != 0)
    throw contract_error("SetEncoderWeights: heads must divide dim");
  std::mt19937_64 rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  SetEncoderWeights w;
  w.heads = heads;
  w.dim = dim;
  w.ff_dim = ff_dim;
  w.wq = seeded_matrix(dim, dim, rng, s);
  w.wk = seeded_matrix(dim, dim, rng, s);
  w.wv = seeded_matrix(dim, dim, rng, s);
  w.wo = seeded_matrix(dim, dim, rng, s);
  w.ff1_w = seeded_matrix(ff_dim, dim, rng, s);
  w.ff1_b.assign(ff_dim, 0.0);
  w.ff2_w = seeded_matrix(dim, ff_dim, rng,
                          1.0 / std::sqrt(static_cast<double>(ff_dim)));
  w.ff2_b.assign(dim, 0.0);
  w.ln1_scale.assign(dim, 1.0);
  w.ln1_shift.assign(dim, 0.0);
  w.ln2_scale.assign(dim, 1.0);
  w.ln2_shift.assign(dim, 0.0);
  w.pma_seed = seeded_matrix(1, dim, rng, 1.0);
  w.pma_wq = seeded_matrix(dim, dim, rng, s);
  w.pma_wk = seeded_matrix(dim, dim, rng, s);
  w.pma_wv = seeded_matrix(dim, dim, rng, s);
  w.pma_wo = seeded_matrix(dim, dim, rng, s);
  return w;
}

void SetEncoderWeights::validate() const {
  if (heads == 0 || dim == 0 || dim % heads != 0)
    throw contract_error("SetEncoderWeights: heads must divide dim");
  auto check = [&](const std::vector<double>& m, std::size_t sz,
                   const char* name) {
    if (m.size() != sz)
      throw contract_error(std::string("SetEncoderWeights: bad size for ") +
                           name);
  };
  check(wq, dim * dim, "wq");
  check(wk, dim * dim, "wk");
  check(wv, dim * dim, "wv");
  check(wo, dim * dim, "wo");
  check(ff1_w, ff_dim * dim, "ff1_w");
  check(ff1_b, ff_dim, "ff1_b");
  check(ff2_w, dim * ff_dim, "ff2_w");
  check(ff2_b, dim, "ff2_b");
  check(ln1_scale, dim, "ln1_scale");
  check(ln1_shift, dim, "ln1_shift");
  check(ln2_scale, dim, "ln2_scale");
  check(ln2_shift, dim, "ln2_shift");
  check(pma_seed, dim, "pma_seed");
  check(pma_wq, dim * dim, "pma_wq");
  check(pma_wk, dim * dim, "pma_wk");
  check(pma_wv, dim * dim, "pma_wv");
  check(pma_wo, dim * dim, "pma_wo");
}

std::vector<float> span_rep(const EmbeddingMatrix& tokens, std::size_t a,
                            std::size_t b, const ProjectionHead& proj) {
  if (a > b || b >= tokens.rows)
    throw contract_error("span_rep: invalid span indices");
  const std::size_t d = tokens.dim;
  std::vector<float> cat(3 * d);
  auto ra = tokens.row(a);
  auto rb = tokens.row(b);
  for (std::size_t j = 0; j < d; ++j) {
    cat[j] = ra[j];
    cat[d + j] = rb[j];
  }
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = a; i <= b; ++i) acc += tokens.at(i, j);
    cat[2 * d + j] = static_cast<float>(acc / static_cast<double>(b - a + 1));
  }
  return proj.apply(cat);
}

std::vector<float> pair_dist_features(Span head, Span tail,
                                      std::size_t token_count) {
  double order = head.a <= tail.a ? 1.0 : -1.0;
  // Gap between nearest endpoints, 0 when the spans touch or overlap.
  double gap;
  if (head.b < tail.a)
    gap = static_cast<double>(tail.a - head.b) - 1.0;
  else if (tail.b < head.a)
    gap = static_cast<double>(head.a - tail.b) - 1.0;
  else
    gap = 0.0;
  double mid_h = (static_cast<double>(head.a) + head.b) / 2.0;
  double mid_t = (static_cast<double>(tail.a) + tail.b) / 2.0;
  double mid_dist =
      token_count > 0 ? std::abs(mid_h - mid_t) / static_cast<double>(token_count)
                      : 0.0;
  return {static_cast<float>(order), static_cast<float>(std::log1p(gap)),
          static_cast<float>(mid_dist)};
}

std::vector<float> pair_rep(const std::vector<float>& h_head,
                            const std::vector<float>& h_tail, Span head,
                            Span tail, std::size_t token_count,
                            const ProjectionHead& proj) {
  std::vector<float> cat;
  cat.reserve(h_head.size() + h_tail.size() + 3);
  cat.insert(cat.end(), h_head.begin(), h_head.end());
  cat.insert(cat.end(), h_tail.begin(), h_tail.end());
  auto dist = pair_dist_features(head, tail, token_count);
  cat.insert(cat.end(), dist.begin(), dist.end());
  return proj.apply(cat);
}

std::vector<std::vector<float>> build_evidence_set(
    const std::vector<float>& q, const EvidenceSelection& selection,
    const std::vector<ImageEntry>& images, std::size_t k_regions) {
  std::vector<std::vector<float>> out;
  for (std::size_t idx : selection.chosen) {
    if (idx >= images.size())
      throw contract_error("build_evidence_set: image index out of range");
    const ImageEntry& im = images[idx];
    out.push_back(im.global_vec);
    if (im.regions && k_regions > 0) {
      const EmbeddingMatrix& regions = im.regions->get();
      for (std::size_t r : top_k_regions(q, regions, k_regions)) {
        auto row = regions.row(r);
        out.emplace_back(row.begin(), row.end());
      }
    }
  }
  return out;
}

std::vector<float> set_encode(const std::vector<std::vector<float>>& evidence,
                              const SetEncoderWeights& w) {
  if (evidence.empty())
    throw contract_error("set_encode: empty evidence; use the fallback path");
  w.validate();
  const std::size_t dim = w.dim;
  std::vector<std::vector<double>> x;
  x.reserve(evidence.size());
  for (const auto& v : evidence) {
    if (v.size() != dim) throw contract_error("set_encode: evidence dim mismatch");
    x.emplace_back(v.begin(), v.end());
  }

  // SAB: self-attention + residual + LN, then FF + residual + LN.
  std::vector<std::vector<double>> sab(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    auto att = multihead(x[t], x, w.wq, w.wk, w.wv, w.wo, dim, w.heads);
    std::vector<double> h(dim);
    for (std::size_t j = 0; j < dim; ++j) h[j] = x[t][j] + att[j];
    layer_norm(h, w.ln1_scale, w.ln1_shift);
    auto f1 = matvec(w.ff1_w, w.ff_dim, dim, h);
    for (std::size_t j = 0; j < w.ff_dim; ++j)
      f1[j] = std::max(0.0, f1[j] + w.ff1_b[j]);
    auto f2 = matvec(w.ff2_w, dim, w.ff_dim, f1);
    for (std::size_t j = 0; j < dim; ++j) f2[j] += w.ff2_b[j] + h[j];
    layer_norm(f2, w.ln2_scale, w.ln2_shift);
    sab[t] = std::move(f2);
  }

  // PMA: one seed query attending over the SAB output.
  auto pooled =
      multihead(w.pma_seed, sab, w.pma_wq, w.pma_wk, w.pma_wv, w.pma_wo, dim,
                w.heads);
  std::vector<float> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(pooled[j]);
  return out;
}

std::vector<float> fuse(const std::vector<float>& h,
                        const std::vector<float>& z_set, double eta,
                        const ProjectionHead& fuse_head) {
  if (eta < 0.0 || eta > 1.0) throw contract_error("fuse: eta outside [0,1]");
  if (eta == 0.0) return h;  // bit-exact text-only fallback
  std::vector<float> cat;
  cat.reserve(h.size() + z_set.size());
  cat.insert(cat.end(), h.begin(), h.end());
  cat.insert(cat.end(), z_set.begin(), z_set.end());
  auto fused = fuse_head.apply(cat);
  if (fused.size() != h.size())
    throw contract_error("fuse: fuse head output dim != h dim");
  std::vector<float> out(h.size());
  for (std::size_t j = 0; j < h.size(); ++j)
    out[j] = static_cast<float>((1.0 - eta) * h[j] + eta * fused[j]);
  return out;
}

double consistency(const ProjectionHead& proj, const std::vector<float>& h_tilde,
                   const std::optional<std::vector<float>>& z_set) {
  if (!z_set) return 0.0;
  auto p = proj.apply(h_tilde);
  return cosine(p, *z_set);
}

namespace {

json mat_to_json(const std::vector<double>& m) { return json(m); }

}  // namespace

void save_projection(const ProjectionHead& p, const std::string& path) {
  json j;
  j["format"] = "saver-projection";
  j["version"] = 1;
  j["dim_in"] = p.dim_in;
  j["dim_out"] = p.dim_out;
  j["weight"] = p.weight;
  j["bias"] = p.bias;
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  os << j.dump() << "\n";
}

ProjectionHead load_projection(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  json j;
  is >> j;
  if (j.value("format", "") != "saver-projection")
    throw format_error("not a saver projection file: " + path);
  ProjectionHead p;
  p.dim_in = j.at("dim_in").get<std::size_t>();
  p.dim_out = j.at("dim_out").get<std::size_t>();
  p.weight = j.at("weight").get<std::vector<double>>();
  p.bias = j.at("bias").get<std::vector<double>>();
  if (p.weight.size() != p.dim_in * p.dim_out || p.bias.size() != p.dim_out)
    throw format_error("inconsistent projection shapes in " + path);
  return p;
}

void save_set_encoder(const SetEncoderWeights& w, const std::string& path) {
  w.validate();
  json j;
  j["format"] = "saver-set-encoder";
  j["version"] = 1;
  j["heads"] = w.heads;
  j["dim"] = w.dim;
  j["ff_dim"] = w.ff_dim;
  j["wq"] = mat_to_json(w.wq);
  j["wk"] = mat_to_json(w.wk);
  j["wv"] = mat_to_json(w.wv);
  j["wo"] = mat_to_json(w.wo);
  j["ff1_w"] = mat_to_json(w.ff1_w);
  j["ff1_b"] = mat_to_json(w.ff1_b);
  j["ff2_w"] = mat_to_json(w.ff2_w);
  j["ff2_b"] = mat_to_json(w.ff2_b);
  j["ln1_scale"] = mat_to_json(w.ln1_scale);
  j["ln1_shift"] = mat_to_json(w.ln1_shift);
  j["ln2_scale"] = mat_to_json(w.ln2_scale);
  j["ln2_shift"] = mat_to_json(w.ln2_shift);
  j["pma_seed"] = mat_to_json(w.pma_seed);
  j["pma_wq"] = mat_to_json(w.pma_wq);
  j["pma_wk"] = mat_to_json(w.pma_wk);
  j["pma_wv"] = mat_to_json(w.pma_wv);
  j["pma_wo"] = mat_to_json(w.pma_wo);
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  os << j.dump() << "\n";
}

SetEncoderWeights load_set_encoder(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path);
  json j;
  is >> j;
  if (j.value("format", "") != "saver-set-encoder")
    throw format_error("not a saver set-encoder file: " + path);
  SetEncoderWeights w;
  w.heads = j.at("heads").get<std::size_t>();
  w.dim = j.at("dim").get<std::size_t>();
  w.ff_dim = j.at("ff_dim").get<std::size_t>();
  auto get = [&](const char* k) { return j.at(k).get<std::vector<double>>(); };
  w.wq = get("wq");
  w.wk = get("wk");
  w.wv = get("wv");
  w.wo = get("wo");
  w.ff1_w = get("ff1_w");
  w.ff1_b = get("ff1_b");
  w.ff2_w = get("ff2_w");
  w.ff2_b = get("ff2_b");
  w.ln1_scale = get("ln1_scale");
  w.ln1_shift = get("ln1_shift");
  w.ln2_scale = get("ln2_scale");
  w.ln2_shift = get("ln2_shift");
  w.pma_seed = get("pma_seed");
  w.pma_wq = get("pma_wq");
  w.pma_wk = get("pma_wk");
  w.pma_wv = get("pma_wv");
  w.pma_wo = get("pma_wo");
  w.validate();
  return w;
}

}  // namespace saver
