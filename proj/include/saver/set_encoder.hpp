#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saver/dataset.hpp"
#include "saver/matrix.hpp"
#include "saver/selector.hpp"

namespace saver {

// Dense affine map, row-major weight matrix (dim_out x dim_in).
struct ProjectionHead {
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::vector<double> weight;  // dim_out * dim_in
  std::vector<double> bias;    // dim_out

  std::vector<float> apply(std::span<const float> x) const;
  std::vector<float> apply(const std::vector<float>& x) const {
    return apply(std::span<const float>(x));
  }

  static ProjectionHead identity(std::size_t d);
  static ProjectionHead seeded(std::size_t dim_in, std::size_t dim_out,
                               std::uint64_t seed);
};

// One SAB block (multihead self-attention + residual + layer norm +
// feed-forward + residual + layer norm) followed by PMA (seed-query multihead
// attention over the SAB output).
struct SetEncoderWeights {
  std::size_t heads = 0;
  std::size_t dim = 0;
  // dim x dim each, row-major
  std::vector<double> wq, wk, wv, wo;
  // feed-forward dim -> ff_dim -> dim
  std::size_t ff_dim = 0;
  std::vector<double> ff1_w, ff1_b, ff2_w, ff2_b;
  std::vector<double> ln1_scale, ln1_shift, ln2_scale, ln2_shift;
  std::vector<double> pma_seed;  // 1 x dim
  std::vector<double> pma_wq, pma_wk, pma_wv, pma_wo;

  static SetEncoderWeights seeded(std::size_t dim, std::size_t heads,
                                  std::size_t ff_dim, std::uint64_t seed);
  void validate() const;
};

void save_set_encoder(const SetEncoderWeights& w, const std::string& path);
SetEncoderWeights load_set_encoder(const std::string& path);
void save_projection(const ProjectionHead& p, const std::string& path);
ProjectionHead load_projection(const std::string& path);

// h_s = proj([H_a; H_b; mean(H_a..H_b)]); depends only on rows a..b.
std::vector<float> span_rep(const EmbeddingMatrix& tokens, std::size_t a,
                            std::size_t b, const ProjectionHead& proj);

// Distance/order features between head and tail spans:
// [order_flag in {-1,+1}, log(1+gap), midpoint distance / token count].
std::vector<float> pair_dist_features(Span head, Span tail,
                                      std::size_t token_count);

// proj([h_head; h_tail; pair_dist_features]).
std::vector<float> pair_rep(const std::vector<float>& h_head,
                            const std::vector<float>& h_tail, Span head,
                            Span tail, std::size_t token_count,
                            const ProjectionHead& proj);

// Global vector per chosen image plus its top-k regions ranked by cosine to
// q. Region matrices load lazily; an image without regions contributes only
// its global vector.
std::vector<std::vector<float>> build_evidence_set(
    const std::vector<float>& q, const EvidenceSelection& selection,
    const std::vector<ImageEntry>& images, std::size_t k_regions);

// SAB then PMA; deterministic given weights. Throws on empty evidence.
std::vector<float> set_encode(const std::vector<std::vector<float>>& evidence,
                              const SetEncoderWeights& w);

// (1-eta) h + eta * fuse_head([h; z]).
std::vector<float> fuse(const std::vector<float>& h,
                        const std::vector<float>& z_set, double eta,
                        const ProjectionHead& fuse_head);

// cosine(proj(h~), z_set); 0 when no evidence was built.
double consistency(const ProjectionHead& proj, const std::vector<float>& h_tilde,
                   const std::optional<std::vector<float>>& z_set);

}  // namespace saver
