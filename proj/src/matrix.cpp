#include "saver/matrix.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "saver/errors.hpp"

namespace saver {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'A', 'V', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b;
  is.read(reinterpret_cast<char*>(b.data()), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b;
  is.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (dim < 1) throw contract_error("EmbeddingMatrix: dim must be >= 1");
  if (data.size() != rows * dim)
    throw contract_error("EmbeddingMatrix: data length != rows * dim");
  for (float x : data)
    if (!std::isfinite(x))
      throw contract_error("EmbeddingMatrix: non-finite entry");
}

void write_matrix(const EmbeddingMatrix& m, const std::string& path) {
  m.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for write: " + path);
  os.write(kMagic.data(), 4);
  put_u32(os, kVersion);
  put_u64(os, m.rows);
  put_u64(os, m.dim);
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * 4));
  if (!os) throw io_error("write failed: " + path);
}

EmbeddingMatrix read_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::array<char, 4> magic;
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw format_error("bad magic in " + path);
  std::uint32_t version = get_u32(is);
  if (!is || version != kVersion)
    throw format_error("unsupported version in " + path);
  std::uint64_t rows = get_u64(is);
  std::uint64_t dim = get_u64(is);
  if (!is) throw format_error("truncated header in " + path);
  if (dim < 1) throw format_error("dim < 1 in " + path);
  EmbeddingMatrix m;
  m.rows = rows;
  m.dim = dim;
  m.data.resize(static_cast<std::size_t>(rows * dim));
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * 4));
  if (static_cast<std::size_t>(is.gcount()) != m.data.size() * 4)
    throw format_error("truncated payload in " + path + ": expected " +
                       std::to_string(m.data.size() * 4) + " bytes");
  // A well-formed file has no trailing bytes.
  is.peek();
  if (!is.eof()) throw format_error("trailing bytes in " + path);
  return m;
}

double cosine(std::span<const float> a, std::span<const float> b,
              bool* degenerate) {
  if (a.size() != b.size())
    throw contract_error("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (degenerate) *degenerate = false;
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine(const std::vector<float>& a, const std::vector<float>& b,
              bool* degenerate) {
  return cosine(std::span<const float>(a), std::span<const float>(b),
                degenerate);
}

}  // namespace saver
