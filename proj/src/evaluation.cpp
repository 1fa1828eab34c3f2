// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "mfr/errors.hpp"
#include "mfr/matching.hpp"

namespace mfr {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_dim(const Matrix& W, std::size_t d, const char* what) {
  if (W.cols() != d) {
    std::ostringstream os;
    os << what << ": dictionary has d=" << W.cols() << ", expected d=" << d;
    throw DimensionError(os.str());
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }
double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (double v : m.row(r)) row.push_back(number_or_null(v));
    out.push_back(std::move(row));
  }
  return out;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t n = j.size();
  const std::size_t m = n == 0 ? 0 : j.at(0).size();
  Matrix out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    if (j.at(r).size() != m) throw FormatError("ragged matrix in report", 0);
    for (std::size_t c = 0; c < m; ++c) out(r, c) = number_or_nan(j.at(r).at(c));
  }
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_field(const std::string& s, std::uint64_t offset) {
  if (s == "nan") return kNaN;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("scatter CSV: bad number '" + s + "'", offset);
  }
  if (used != s.size()) throw FormatError("scatter CSV: bad number '" + s + "'", offset);
  return v;
}

std::size_t parse_index(const std::string& s, std::uint64_t offset) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("scatter CSV: bad index '" + s + "'", offset);
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace

double ground_truth_mmcs(const Matrix& W, const FeatureMatrix& fm) {
  require_dim(W, fm.d(), "ground_truth_mmcs");
  return mmcs(W, fm.features_as_rows());
}

std::vector<double> ground_truth_similarities(const Matrix& W, const FeatureMatrix& fm) {
  require_dim(W, fm.d(), "ground_truth_similarities");
  std::vector<double> out;
  out.reserve(W.rows());
  for (const auto& m : max_cosine_pairs(W, fm.features_as_rows())) out.push_back(m.similarity);
  return out;
}

std::vector<ScatterRow> similarity_scatter(const Matrix& W1, const Matrix& W2,
                                           const FeatureMatrix* fm,
                                           std::span<const double> freq1, std::size_t sae_id) {
  require_dim(W2, W1.cols(), "similarity_scatter");
  if (!freq1.empty() && freq1.size() != W1.rows())
    throw DimensionError("similarity_scatter: frequency vector length differs from feature count");
  std::vector<double> gt;
  if (fm) gt = ground_truth_similarities(W1, *fm);
  const Assignment a = hungarian(cosine_table(W1, W2));
  std::vector<ScatterRow> rows;
  rows.reserve(a.pairs.size());
  for (const Pair& p : a.pairs) {
    rows.push_back({sae_id, p.row, p.similarity, fm ? gt[p.row] : kNaN,
                    freq1.empty() ? kNaN : freq1[p.row]});
  }
  return rows;
}

std::size_t cluster_count(std::span<const ScatterRow> rows, double tau_hi, double tau_lo) {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.cross_sae_sim >= tau_hi && r.ground_truth_sim <= tau_lo;
  return n;
}

double decoder_l2_raw(const Matrix& Wi, const Matrix& Wj) { return frobenius_distance(Wi, Wj); }

double decoder_l2_distance(const Matrix& Wi, const Matrix& Wj) {
  if (Wi.rows() != Wj.rows() || Wi.cols() != Wj.cols()) {
    std::ostringstream os;
    os << "decoder_l2_distance: shapes " << Wi.rows() << "x" << Wi.cols() << " and " << Wj.rows()
       << "x" << Wj.cols() << " differ";
    throw DimensionError(os.str());
  }
  const Assignment a = hungarian(matmul_transposed(Wi, Wj));
  double sq = 0.0;
  for (const Pair& p : a.pairs) {
    auto x = Wi.row(p.row);
    auto y = Wj.row(p.col);
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double e = x[t] - y[t];
      sq += e * e;
    }
  }
  return std::sqrt(sq);
}

EvalReport evaluate(std::span<const Matrix> dicts, const FeatureMatrix* fm,
                    std::span<const std::vector<double>> frequencies, EvalOptions opts) {
  if (dicts.empty()) throw ConfigError("evaluation needs at least one dictionary");
  if (!frequencies.empty() && frequencies.size() != dicts.size())
    throw ConfigError("evaluation: one frequency vector per SAE expected");
  const std::size_t n = dicts.size(), d = dicts.front().cols();
  for (const auto& W : dicts) require_dim(W, d, "evaluate");

  EvalReport r;
  r.tau_hi = opts.tau_hi;
  r.tau_lo = opts.tau_lo;
  if (fm)
    for (const auto& W : dicts) r.gt_mmcs.push_back(ground_truth_mmcs(W, *fm));

  r.pairwise_mmcs = Matrix(n, n);
  r.l2_aligned = Matrix(n, n);
  r.l2_raw = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      r.pairwise_mmcs(i, j) = mmcs(dicts[i], dicts[j]);
      if (j < i) {
        r.l2_aligned(i, j) = r.l2_aligned(j, i);
        r.l2_raw(i, j) = r.l2_raw(j, i);
      } else if (j > i) {
        const bool same = dicts[i].rows() == dicts[j].rows();
        r.l2_aligned(i, j) = same ? decoder_l2_distance(dicts[i], dicts[j]) : kNaN;
        r.l2_raw(i, j) = same ? decoder_l2_raw(dicts[i], dicts[j]) : kNaN;
      }
    }

  if (n >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto freq = frequencies.empty() ? std::span<const double>{}
                                            : std::span<const double>(frequencies[i]);
      auto rows = similarity_scatter(dicts[i], dicts[(i + 1) % n], fm, freq, i);
      if (fm) r.cluster_count.push_back(cluster_count(rows, opts.tau_hi, opts.tau_lo));
      r.scatter.insert(r.scatter.end(), rows.begin(), rows.end());
    }
    if (fm) {
      std::vector<double> xs, ys;
      for (const auto& row : r.scatter) {
        xs.push_back(row.cross_sae_sim);
        ys.push_back(row.ground_truth_sim);
      }
      try {
        r.pearson_r = pearson(xs, ys);
      } catch (const CorrelationError&) {
        r.pearson_r.reset();
      }
    }
  }
  return r;
}

json report_json(const EvalReport& r) {
  json gt = json::array();
  for (double v : r.gt_mmcs) gt.push_back(number_or_null(v));
  return {{"schema_version", r.schema_version},
          {"gt_mmcs", gt},
          {"pairwise_mmcs", matrix_json(r.pairwise_mmcs)},
          {"pearson_r", r.pearson_r ? number_or_null(*r.pearson_r) : json()},
          {"cluster_count", r.cluster_count},
          {"cluster_tau_hi", r.tau_hi},
          {"cluster_tau_lo", r.tau_lo},
          {"l2_aligned", matrix_json(r.l2_aligned)},
          {"l2_raw", matrix_json(r.l2_raw)}};
}

void write_scatter_csv(const std::filesystem::path& path, std::span<const ScatterRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kScatterHeader << '\n';
  for (const auto& r : rows)
    out << r.sae_id << ',' << r.feature_id << ',' << fmt(r.cross_sae_sim) << ','
        << fmt(r.ground_truth_sim) << ',' << fmt(r.activation_freq) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || line != kScatterHeader)
    throw FormatError("scatter CSV " + path.string() + ": unexpected header", 0);
  offset += line.size() + 1;
  std::vector<ScatterRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5)
      throw FormatError("scatter CSV " + path.string() + ": expected 5 fields", offset);
    rows.push_back({parse_index(f[0], offset), parse_index(f[1], offset),
                    parse_field(f[2], offset), parse_field(f[3], offset),
                    parse_field(f[4], offset)});
    offset += line.size() + 1;
  }
  return rows;
}

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
  const auto json_path = dir / "report.json";
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << report_json(r).dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing " + json_path.string());
  write_scatter_csv(dir / "scatter.csv", r.scatter);
}

EvalReport read_report(const std::filesystem::path& dir) {
  const auto json_path = dir / "report.json";
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + json_path.string());
  EvalReport r;
  try {
    const json j = json::parse(in);
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
      throw FormatError("report " + json_path.string() + ": unsupported schema version " +
                            std::to_string(r.schema_version),
                        0);
    for (const auto& v : j.at("gt_mmcs")) r.gt_mmcs.push_back(number_or_nan(v));
    r.pairwise_mmcs = matrix_from_json(j.at("pairwise_mmcs"));
    if (!j.at("pearson_r").is_null()) r.pearson_r = j.at("pearson_r").get<double>();
    r.cluster_count = j.at("cluster_count").get<std::vector<std::size_t>>();
    r.tau_hi = j.at("cluster_tau_hi").get<double>();
    r.tau_lo = j.at("cluster_tau_lo").get<double>();
    r.l2_aligned = matrix_from_json(j.at("l2_aligned"));
    r.l2_raw = matrix_from_json(j.at("l2_raw"));
  } catch (const json::exception& e) {
    throw FormatError("report " + json_path.string() + ": " + e.what(), 0);
  }
  r.scatter = read_scatter_csv(dir / "scatter.csv");
  return r;
}

}  // namespace mfr
