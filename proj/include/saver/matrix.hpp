#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace saver {

// Dense row-major embedding matrix. Entries are 32-bit floats (the on-disk
// width); all reductions accumulate in double.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // rows * dim, row-major

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t r, std::size_t d)
      : rows(r), dim(d), data(r * d, 0.0f) {}

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data.data() + i * dim, dim);
  }
  std::span<float> row(std::size_t i) {
    return std::span<float>(data.data() + i * dim, dim);
  }

  float& at(std::size_t i, std::size_t j) { return data[i * dim + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * dim + j]; }

  bool operator==(const EmbeddingMatrix&) const = default;

  void validate() const;  // throws contract_error on invariant violation
};

// Binary matrix file, version 1:
//   bytes 0..3   magic "SAVR"
//   bytes 4..7   version, u32 LE (= 1)
//   bytes 8..15  rows, u64 LE
//   bytes 16..23 dim, u64 LE
//   then rows*dim f32 LE, row-major
void write_matrix(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix read_matrix(const std::string& path);

// Cosine similarity with double accumulation. A zero-norm input yields 0.0
// and sets *degenerate when provided; padded or absent vectors behave as
// non-evidence instead of aborting a batch.
double cosine(std::span<const float> a, std::span<const float> b,
              bool* degenerate = nullptr);
double cosine(const std::vector<float>& a, const std::vector<float>& b,
              bool* degenerate = nullptr);

}  // namespace saver
