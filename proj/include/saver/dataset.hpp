#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "saver/matrix.hpp"

namespace saver {

struct Span {
  std::size_t a = 0;
  std::size_t b = 0;  // inclusive
  bool operator==(const Span&) const = default;
  std::size_t length() const { return b - a + 1; }
};

enum class UnitKind { Span, Pair };

struct UnitSpec {
  UnitKind kind = UnitKind::Span;
  Span span;                       // kind == Span
  Span head, tail;                 // kind == Pair
  std::optional<int> gold;         // label id; pairs carry exactly one
};

// Region matrices are materialized lazily; every load bumps a global counter
// so tests can observe that unactivated units never touch region files.
class RegionStore {
public:
  explicit RegionStore(std::string path) : path_(std::move(path)) {}

  // In-memory store for synthetic worlds; the first get() still counts as a
  // region read so the lazy contract stays observable without files.
  static std::shared_ptr<RegionStore> in_memory(EmbeddingMatrix m);

  const EmbeddingMatrix& get() const;
  const std::string& path() const { return path_; }

  static std::size_t read_count() { return read_count_.load(); }
  static void reset_read_count() { read_count_.store(0); }

private:
  std::string path_;
  mutable std::mutex mu_;
  mutable std::optional<EmbeddingMatrix> pending_;  // preloaded, not yet read
  mutable std::optional<EmbeddingMatrix> cached_;
  static std::atomic<std::size_t> read_count_;
};

struct ImageEntry {
  std::string image_id;
  std::vector<float> global_vec;
  std::shared_ptr<RegionStore> regions;  // null when the image has no regions
};

struct Sample {
  std::string id;
  EmbeddingMatrix tokens;
  std::vector<ImageEntry> images;
  std::vector<UnitSpec> units;
};

// Line-delimited JSON dataset, one sample per line. Matrix fields are either
// inline rows or {"ref": path} sidecar references resolved relative to the
// dataset file. Records carrying a "saver_manifest" key are provenance
// headers and are skipped.
std::vector<Sample> load_dataset(const std::string& path);

// header, when non-empty, is written verbatim as the first line (a manifest
// record).
void write_dataset(const std::vector<Sample>& samples, const std::string& path,
                   const std::string& matrix_dir,
                   const std::string& header = "");

}  // namespace saver
