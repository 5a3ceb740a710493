#include "saver/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "saver/errors.hpp"

namespace saver {

namespace fs = std::filesystem;
using nlohmann::json;

std::atomic<std::size_t> RegionStore::read_count_{0};

std::shared_ptr<RegionStore> RegionStore::in_memory(EmbeddingMatrix m) {
  auto store = std::make_shared<RegionStore>("<memory>");
  store->pending_ = std::move(m);
  return store;
}

const EmbeddingMatrix& RegionStore::get() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (!cached_) {
    read_count_.fetch_add(1);
    if (pending_) {
      cached_ = std::move(*pending_);
      pending_.reset();
    } else {
      cached_ = read_matrix(path_);
    }
  }
  return *cached_;
}

namespace {

Span parse_span(const json& j, std::size_t line_no) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() ||
      !j[1].is_number_unsigned())
    throw format_error("line " + std::to_string(line_no) +
                       ": span must be [a, b] with a, b unsigned");
  Span s{j[0].get<std::size_t>(), j[1].get<std::size_t>()};
  if (s.a > s.b)
    throw format_error("line " + std::to_string(line_no) + ": span a > b");
  return s;
}

EmbeddingMatrix parse_matrix_field(const json& j, const fs::path& base,
                                   std::size_t line_no) {
  if (j.is_object() && j.contains("ref")) {
    fs::path p = j.at("ref").get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p))
      throw format_error("line " + std::to_string(line_no) +
                         ": dangling matrix reference " + p.string());
    return read_matrix(p.string());
  }
  if (j.is_object() && j.contains("rows")) {
    const json& rows = j.at("rows");
    if (!rows.is_array() || rows.empty())
      throw format_error("line " + std::to_string(line_no) +
                         ": inline matrix must have rows");
    EmbeddingMatrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.dim)
        throw format_error("line " + std::to_string(line_no) +
                           ": ragged inline matrix");
      for (std::size_t k = 0; k < m.dim; ++k)
        m.at(i, k) = rows[i][k].get<float>();
    }
    return m;
  }
  throw format_error("line " + std::to_string(line_no) +
                     ": matrix field needs \"ref\" or \"rows\"");
}

std::vector<float> parse_vector_field(const json& j, const fs::path& base,
                                      std::size_t line_no) {
  if (j.is_array()) {
    std::vector<float> v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(x.get<float>());
    return v;
  }
  if (j.is_object() && j.contains("ref")) {
    std::size_t row = j.value("row", std::size_t{0});
    EmbeddingMatrix m = parse_matrix_field(j, base, line_no);
    if (row >= m.rows)
      throw format_error("line " + std::to_string(line_no) +
                         ": vector row out of range");
    auto r = m.row(row);
    return std::vector<float>(r.begin(), r.end());
  }
  throw format_error("line " + std::to_string(line_no) +
                     ": vector field must be inline array or {ref,row}");
}

Sample parse_sample(const json& rec, const fs::path& base,
                    std::size_t line_no) {
  Sample s;
  if (!rec.is_object() || !rec.contains("id") || !rec.contains("tokens"))
    throw format_error("line " + std::to_string(line_no) +
                       ": record needs id and tokens");
  s.id = rec.at("id").get<std::string>();
  s.tokens = parse_matrix_field(rec.at("tokens"), base, line_no);

  std::set<std::string> seen_ids;
  for (const auto& im : rec.value("images", json::array())) {
    ImageEntry e;
    e.image_id = im.at("image_id").get<std::string>();
    if (!seen_ids.insert(e.image_id).second)
      throw format_error("line " + std::to_string(line_no) +
                         ": duplicate image id " + e.image_id);
    e.global_vec = parse_vector_field(im.at("global"), base, line_no);
    if (im.contains("regions") && !im.at("regions").is_null()) {
      fs::path p = im.at("regions").get<std::string>();
      if (p.is_relative()) p = base / p;
      if (!fs::exists(p))
        throw format_error("line " + std::to_string(line_no) +
                           ": dangling regions reference " + p.string());
      e.regions = std::make_shared<RegionStore>(p.string());
    }
    s.images.push_back(std::move(e));
  }

  for (const auto& u : rec.value("units", json::array())) {
    UnitSpec spec;
    std::string kind = u.at("kind").get<std::string>();
    if (kind == "span") {
      spec.kind = UnitKind::Span;
      spec.span = parse_span(u.at("span"), line_no);
      if (spec.span.b >= s.tokens.rows)
        throw format_error("line " + std::to_string(line_no) +
                           ": span end past token rows");
    } else if (kind == "pair") {
      spec.kind = UnitKind::Pair;
      spec.head = parse_span(u.at("head"), line_no);
      spec.tail = parse_span(u.at("tail"), line_no);
      if (spec.head.b >= s.tokens.rows || spec.tail.b >= s.tokens.rows)
        throw format_error("line " + std::to_string(line_no) +
                           ": pair span past token rows");
      if (!u.contains("gold") || u.at("gold").is_null())
        throw format_error("line " + std::to_string(line_no) +
                           ": pair unit requires a gold relation id");
    } else {
      throw format_error("line " + std::to_string(line_no) +
                         ": unknown unit kind " + kind);
    }
    if (u.contains("gold") && !u.at("gold").is_null())
      spec.gold = u.at("gold").get<int>();
    s.units.push_back(spec);
  }
  return s;
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open dataset: " + path);
  fs::path base = fs::path(path).parent_path();
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw format_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.is_object() && rec.contains("saver_manifest")) continue;
    out.push_back(parse_sample(rec, base, line_no));
  }
  return out;
}

void write_dataset(const std::vector<Sample>& samples, const std::string& path,
                   const std::string& matrix_dir, const std::string& header) {
  fs::path base = fs::path(path).parent_path();
  if (base.empty()) base = ".";
  fs::path mdir = matrix_dir;
  if (mdir.is_relative()) mdir = base / mdir;
  fs::create_directories(mdir);
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for write: " + path);
  if (!header.empty()) os << header << "\n";
  for (const auto& s : samples) {
    fs::path tok_path = mdir / (s.id + "_tokens.savr");
    write_matrix(s.tokens, tok_path.string());
    json rec;
    rec["id"] = s.id;
    rec["tokens"] = {{"ref", fs::relative(tok_path, base).string()}};
    rec["images"] = json::array();
    for (const auto& im : s.images) {
      json je;
      je["image_id"] = im.image_id;
      je["global"] = im.global_vec;
      if (im.regions) {
        fs::path rp = mdir / (s.id + "_" + im.image_id + "_regions.savr");
        write_matrix(im.regions->get(), rp.string());
        je["regions"] = fs::relative(rp, base).string();
      }
      rec["images"].push_back(je);
    }
    rec["units"] = json::array();
    for (const auto& u : s.units) {
      json ju;
      if (u.kind == UnitKind::Span) {
        ju["kind"] = "span";
        ju["span"] = {u.span.a, u.span.b};
      } else {
        ju["kind"] = "pair";
        ju["head"] = {u.head.a, u.head.b};
        ju["tail"] = {u.tail.a, u.tail.b};
      }
      if (u.gold)
        ju["gold"] = *u.gold;
      else
        ju["gold"] = nullptr;
      rec["units"].push_back(ju);
    }
    os << rec.dump() << "\n";
  }
}

}  // namespace saver
