#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resil/common.hpp"
#include "resil/corefinder.hpp"
#include "resil/generators.hpp"
#include "resil/lowrank.hpp"
#include "resil/meanest.hpp"
#include "resil/norm_spec.hpp"
#include "resil/resilience.hpp"

namespace resil::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kCsvMagic = "# resil-csv v1";
inline constexpr const char* kDatasetSchema = "resil.dataset.v1";
inline constexpr const char* kBinMagic = "RSLM";

// ---- base64 (standard alphabet, padded) ----

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t v = std::uint32_t(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) v |= std::uint32_t(bytes[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? tbl[v & 63] : '=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  int acc = 0, bits = 0;
  for (char c : s) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) throw InvalidInput("base64_decode: bad character");
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

inline std::string pack_mask(const std::vector<bool>& mask) {
  std::vector<std::uint8_t> bytes((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return base64_encode(bytes);
}

inline std::vector<bool> unpack_mask(const std::string& b64, std::size_t n) {
  const auto bytes = base64_decode(b64);
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < n && i / 8 < bytes.size(); ++i)
    mask[i] = (bytes[i / 8] >> (i % 8)) & 1;
  return mask;
}

// ---- NormSpec <-> JSON (round-trip is bit-exact on the serialized text) ----

inline json norm_spec_to_json(const NormSpec& s) {
  json j;
  switch (s.kind) {
    case NormKind::Euclidean: j["kind"] = "euclidean"; break;
    case NormKind::PNorm:
      j["kind"] = "pnorm";
      j["p"] = s.p;
      break;
    case NormKind::L1ViaP:
      j["kind"] = "l1viap";
      j["m"] = s.m;
      break;
    case NormKind::TopKL1:
      j["kind"] = "topkl1";
      j["k_top"] = s.k_top;
      break;
  }
  return j;
}

inline NormSpec norm_spec_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "euclidean") return NormSpec::euclidean();
  if (kind == "pnorm") return NormSpec::pnorm(j.at("p").get<double>());
  if (kind == "l1viap") return NormSpec::l1_via_p(j.at("m").get<int>());
  if (kind == "topkl1") return NormSpec::top_k_l1(j.at("k_top").get<int>());
  throw InvalidInput("norm_spec_from_json: unknown kind " + kind);
}

// CLI-facing parse of l2 | lp:<p> | l1 | topk:<k>. "l1" maps to the
// p = 1 + 1/ln(m) surrogate with m = dimension (exact-l1 vertex oracles are
// still used where enumerable).
inline NormSpec parse_norm_flag(const std::string& s, Index dim_hint) {
  if (s == "l2") return NormSpec::euclidean();
  if (s == "l1") return NormSpec::l1_via_p(static_cast<int>(std::max<Index>(3, dim_hint)));
  if (s.rfind("lp:", 0) == 0) return NormSpec::pnorm(std::stod(s.substr(3)));
  if (s.rfind("topk:", 0) == 0) return NormSpec::top_k_l1(std::stoi(s.substr(5)));
  throw InvalidConfig("unknown norm flag: " + s + " (use l2 | lp:<p> | l1 | topk:<k>)");
}

// ---- matrix binary (column-major doubles with a small header) ----

inline void write_matrix_bin(const std::string& path, const Matrix& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write(kBinMagic, 4);
  const std::uint32_t version = 1;
  const std::int64_t rows = m.rows(), cols = m.cols();
  f.write(reinterpret_cast<const char*>(&version), sizeof version);
  f.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  f.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

inline Matrix read_matrix_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kBinMagic, 4) != 0) throw InvalidInput("bad matrix file magic: " + path);
  std::uint32_t version = 0;
  std::int64_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != 1) throw InvalidInput("unsupported matrix file version");
  f.read(reinterpret_cast<char*>(&rows), sizeof rows);
  f.read(reinterpret_cast<char*>(&cols), sizeof cols);
  Matrix m(rows, cols);
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!f) throw InvalidInput("truncated matrix file: " + path);
  return m;
}

// ---- dataset = binary matrix + JSON sidecar ----

inline void write_dataset(const std::string& base, const LabeledDataset& ds) {
  write_matrix_bin(base + ".bin", ds.points);
  json j;
  j["schema"] = kDatasetSchema;
  j["rows"] = ds.dim();
  j["cols"] = ds.n();
  j["good_mask"] = pack_mask(ds.good_mask);
  j["true_center"] = std::vector<double>(ds.true_center.data(),
                                         ds.true_center.data() + ds.true_center.size());
  j["generator"] = ds.generator;
  j["seed"] = ds.seed;
  json meta;
  for (const auto& [key, value] : ds.meta) {
    // JSON has no inf/nan literals; encode them as strings
    if (std::isfinite(value)) meta[key] = value;
    else meta[key] = value > 0 ? "inf" : (value < 0 ? "-inf" : "nan");
  }
  j["meta"] = meta;
  std::ofstream f(base + ".json");
  if (!f) throw Error("cannot open for writing: " + base + ".json");
  f << j.dump(2) << "\n";
}

inline LabeledDataset read_dataset(const std::string& base) {
  std::ifstream f(base + ".json");
  if (!f) throw Error("cannot open: " + base + ".json");
  json j = json::parse(f);
  if (j.at("schema").get<std::string>() != kDatasetSchema)
    throw InvalidInput("unknown dataset schema version");
  LabeledDataset ds;
  ds.points = read_matrix_bin(base + ".bin");
  ds.good_mask = unpack_mask(j.at("good_mask").get<std::string>(),
                             static_cast<std::size_t>(ds.points.cols()));
  const auto tc = j.at("true_center").get<std::vector<double>>();
  ds.true_center = Eigen::Map<const Vector>(tc.data(), static_cast<Index>(tc.size()));
  ds.generator = j.value("generator", "");
  ds.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("meta"))
    for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it) {
      if (it.value().is_string()) {
        const std::string s = it.value().get<std::string>();
        ds.meta[it.key()] = s == "inf" ? std::numeric_limits<double>::infinity()
                            : s == "-inf" ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::quiet_NaN();
      } else {
        ds.meta[it.key()] = it.value().get<double>();
      }
    }
  return ds;
}

inline void write_dataset_csv(const std::string& path, const LabeledDataset& ds) {
  if (ds.dim() * ds.n() > 10000)
    throw InvalidConfig("dataset CSV export is limited to d*n <= 10^4; use the binary format");
  std::ofstream f(path);
  if (!f) throw Error("cannot open for writing: " + path);
  f << kCsvMagic << " dataset\n";
  f << "index,good";
  for (Index r = 0; r < ds.dim(); ++r) f << ",x" << r;
  f << "\n";
  f.precision(17);
  for (Index i = 0; i < ds.n(); ++i) {
    f << i << "," << (ds.good_mask[static_cast<std::size_t>(i)] ? 1 : 0);
    for (Index r = 0; r < ds.dim(); ++r) f << "," << ds.points(r, i);
    f << "\n";
  }
}

// ---- resilience profile CSV ----

inline void write_profile_csv(std::ostream& f, const ResilienceProfile& p) {
  f << kCsvMagic << " profile\n";
  f << "eps,sigma,method,directions\n";
  f.precision(17);
  for (std::size_t i = 0; i < p.eps_grid.size(); ++i)
    f << p.eps_grid[i] << "," << p.sigma_values[i] << "," << to_string(p.method) << ","
      << p.directions_used << "\n";
}

inline void expect_csv_schema(std::istream& f, const std::string& kind) {
  std::string line;
  std::getline(f, line);
  if (line != std::string(kCsvMagic) + " " + kind)
    throw InvalidInput("unknown CSV schema line: " + line);
}

inline ResilienceProfile read_profile_csv(std::istream& f) {
  expect_csv_schema(f, "profile");
  std::string line;
  std::getline(f, line);  // header
  ResilienceProfile p;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string eps, sigma, method, dirs;
    std::getline(ss, eps, ',');
    std::getline(ss, sigma, ',');
    std::getline(ss, method, ',');
    std::getline(ss, dirs, ',');
    p.eps_grid.push_back(std::stod(eps));
    p.sigma_values.push_back(std::stod(sigma));
    p.directions_used = std::stol(dirs);
    if (method == "sampled_directions") p.method = BoundMethod::SampledDirections;
    else if (method == "vertex_enum") p.method = BoundMethod::VertexEnum;
  }
  return p;
}

// ---- reports ----

inline json interval_to_json(const CertifiedInterval& ci) {
  return json{{"lower", ci.lower}, {"upper", ci.upper}, {"method", to_string(ci.method)}};
}

inline json core_result_to_json(const CoreResult& r) {
  json j;
  j["weights"] = std::vector<double>(r.weights.data(), r.weights.data() + r.weights.size());
  j["core"] = r.core;
  j["variance"] = interval_to_json(r.certified_variance);
  j["iterations"] = r.iterations;
  j["target_keep"] = r.target_keep;
  j["continuous_objective"] = r.continuous_objective;
  j["rounded_objective"] = r.rounded_objective;
  j["stalled"] = r.stalled;
  return j;
}

// Rank-k output: the recovered matrix in column-major binary plus a JSON
// sidecar with the run metadata.
inline void write_rank_k_result(const std::string& base, const RankKReport& rep, int k,
                                double delta) {
  write_matrix_bin(base + ".bin", rep.p);
  json j;
  j["schema"] = "resil.rankk.v1";
  j["rank"] = rep.rank;
  j["residual_spectral"] = rep.residual_spectral;
  j["residual_orth"] = rep.residual_orth;
  j["k"] = k;
  j["delta"] = delta;
  j["sigma"] = rep.sigma_used;
  j["iterations"] = rep.iterations;
  j["stalled"] = rep.stalled;
  std::ofstream f(base + ".json");
  if (!f) throw Error("cannot open for writing: " + base + ".json");
  f << j.dump(2) << "\n";
}

inline json estimate_report_to_json(const EstimateReport& r) {
  json j;
  j["schema"] = "resil.estimate.v1";
  j["mode"] = to_string(r.mode);
  j["iterations"] = r.iterations;
  j["final_objective"] = r.final_objective;
  j["sigma_used"] = r.sigma_used;
  j["kappa_used"] = r.kappa_used;
  j["sigma_doublings"] = r.sigma_doublings;
  j["stalled"] = r.stalled;
  if (r.estimate) {
    j["estimate"] = std::vector<double>(r.estimate->data(), r.estimate->data() + r.estimate->size());
  } else {
    json cands = json::array();
    for (const auto& c : r.candidates) {
      json jc;
      jc["point"] = std::vector<double>(c.point.data(), c.point.data() + c.point.size());
      jc["weight"] = c.weight;
      cands.push_back(jc);
    }
    j["candidates"] = cands;
  }
  return j;
}

}  // namespace resil::io
