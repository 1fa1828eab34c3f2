// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/storage.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

namespace {

constexpr char kActMagic[4] = {'M', 'F', 'R', 'A'};
constexpr char kFeatMagic[4] = {'M', 'F', 'R', 'F'};
constexpr char kCkptMagic[4] = {'M', 'F', 'R', 'C'};

// ---- little-endian encoding --------------------------------------------

class ByteWriter {
 public:
  void magic(const char (&m)[4]) { buf_.insert(buf_.end(), m, m + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void real(double v, FloatWidth w) { w == FloatWidth::kF32 ? f32(v) : f64(v); }
  const std::vector<unsigned char>& bytes() const { return buf_; }
  void clear() { buf_.clear(); }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(std::string("truncated file: expected ") + what, data_.size());
  }
  void magic(const char (&m)[4], const char* name) {
    need(4, "magic");
    if (std::memcmp(data_.data() + pos_, m, 4) != 0)
      throw FormatError(std::string("bad magic, expected \"") + name + "\"", pos_);
    pos_ += 4;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double real(FloatWidth w, const char* what) {
    const std::size_t at = pos_;
    const double v = w == FloatWidth::kF32
                         ? static_cast<double>(std::bit_cast<float>(u32(what)))
                         : std::bit_cast<double>(u64(what));
    if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, at);
    return v;
  }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

std::uint32_t decode_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t decode_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> data(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size)))
    throw IoError("failed reading " + path.string());
  return data;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void flush_bytes(std::ofstream& out, ByteWriter& w, const std::filesystem::path& path) {
  const auto& b = w.bytes();
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("failed writing " + path.string());
  w.clear();
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string("refusing to write non-finite ") + what);
}

// checked a*b*c for size validation against hostile headers
bool mul_overflows(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return true;
  out = a * b;
  return false;
}

ActivationHeader parse_activation_header(const unsigned char* p, std::uint64_t file_size) {
  if (file_size < kActivationHeaderBytes)
    throw FormatError("truncated activation header", file_size);
  if (std::memcmp(p, kActMagic, 4) != 0) throw FormatError("bad magic, expected \"MFRA\"", 0);
  const std::uint32_t version = decode_u32(p + 4);
  if (version != kFormatVersion)
    throw FormatError("unsupported activation file version " + std::to_string(version), 4);
  ActivationHeader h;
  h.dim = decode_u32(p + 8);
  h.count = decode_u64(p + 12);
  h.dtype = decode_u32(p + 20);
  if (h.dim == 0) throw FormatError("activation dim must be >= 1", 8);
  if (h.dtype != 0) throw FormatError("unsupported dtype tag " + std::to_string(h.dtype), 20);
  std::uint64_t payload = 0;
  if (mul_overflows(h.count, h.dim, payload) || mul_overflows(payload, 4, payload))
    throw FormatError("activation size overflows", 12);
  const std::uint64_t expected = kActivationHeaderBytes + payload;
  if (file_size < expected) {
    // report where the first incomplete row begins
    const std::uint64_t row_bytes = 4ULL * h.dim;
    const std::uint64_t full_rows = (file_size - kActivationHeaderBytes) / row_bytes;
    throw FormatError("truncated activation payload: header declares " +
                          std::to_string(h.count) + " rows, file holds " +
                          std::to_string(full_rows),
                      kActivationHeaderBytes + full_rows * row_bytes);
  }
  if (file_size > expected) throw FormatError("trailing bytes after activation payload", expected);
  return h;
}

}  // namespace

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// ---- activations -----------------------------------------------------------

void write_activations(const std::filesystem::path& path, const Matrix& X) {
  require_finite(X, "activations");
  if (X.cols() == 0) throw ConfigError("activation dim must be >= 1");
  auto out = open_out(path);
  ByteWriter w;
  w.magic(kActMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(X.cols()));
  w.u64(X.rows());
  w.u32(0);
  flush_bytes(out, w, path);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (double v : X.row(r)) w.f32(v);
    flush_bytes(out, w, path);
  }
}

ActivationWriter::ActivationWriter(const std::filesystem::path& path, std::size_t dim)
    : path_(path), out_(open_out(path)), dim_(dim) {
  if (dim == 0) throw ConfigError("activation dim must be >= 1");
  ByteWriter w;
  w.magic(kActMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(0);
  w.u32(0);
  flush_bytes(out_, w, path_);
}

ActivationWriter::~ActivationWriter() {
  try {
    finish();
  } catch (...) {
  }
}

void ActivationWriter::append(const Matrix& rows) {
  if (finished_) throw ConfigError("activation writer already finished");
  if (rows.cols() != dim_) throw DimensionError("activation writer: row width differs from dim");
  require_finite(rows, "activations");
  ByteWriter w;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    for (double v : rows.row(r)) w.f32(v);
    flush_bytes(out_, w, path_);
  }
  count_ += rows.rows();
}

void ActivationWriter::finish() {
  if (finished_) return;
  finished_ = true;
  ByteWriter w;
  w.u64(count_);
  out_.seekp(12);
  flush_bytes(out_, w, path_);
  out_.close();
  if (!out_) throw IoError("failed finalizing " + path_.string());
}

ActivationReader::ActivationReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open " + path.string() + " for reading");
  in_.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0);
  unsigned char head[kActivationHeaderBytes] = {};
  const auto got = std::min<std::uint64_t>(size, kActivationHeaderBytes);
  in_.read(reinterpret_cast<char*>(head), static_cast<std::streamsize>(got));
  header_ = parse_activation_header(head, size);
}

Matrix ActivationReader::read_rows(std::size_t first, std::size_t n) {
  if (first > rows() || n > rows() - first)
    throw FormatError("row range [" + std::to_string(first) + ", " + std::to_string(first + n) +
                          ") past end of " + path_.string(),
                      kActivationHeaderBytes + 4ULL * dim() * rows());
  Matrix out(n, dim());
  constexpr std::size_t kChunkRows = 1024;
  std::vector<unsigned char> buf;
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kActivationHeaderBytes + 4ULL * dim() * first));
  for (std::size_t r0 = 0; r0 < n; r0 += kChunkRows) {
    const std::size_t cnt = std::min(kChunkRows, n - r0);
    buf.resize(cnt * dim() * 4);
    if (!in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("short read in " + path_.string(),
                        kActivationHeaderBytes + 4ULL * dim() * (first + r0));
    for (std::size_t i = 0; i < cnt * dim(); ++i) {
      const double v = static_cast<double>(std::bit_cast<float>(decode_u32(buf.data() + 4 * i)));
      if (!std::isfinite(v))
        throw FormatError("non-finite activation",
                          kActivationHeaderBytes + 4ULL * (dim() * (first + r0) + i));
      out.values()[r0 * dim() + i] = v;
    }
  }
  return out;
}

Matrix read_activations(const std::filesystem::path& path) {
  ActivationReader reader(path);
  return reader.read_rows(0, reader.rows());
}

// ---- features --------------------------------------------------------------

void write_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  require_finite(fm.F, "feature matrix");
  const auto& c = fm.config;
  auto out = open_out(path);
  ByteWriter w;
  w.magic(kFeatMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(fm.F.rows()));
  w.u32(static_cast<std::uint32_t>(fm.F.cols()));
  w.f64(c.lambda);
  w.u32(static_cast<std::uint32_t>(c.E));
  w.u32(static_cast<std::uint32_t>(c.K));
  w.u64(c.seed);
  for (double v : fm.F.values()) w.f32(v);
  flush_bytes(out, w, path);
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  r.magic(kFeatMagic, "MFRF");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FormatError("unsupported feature file version " + std::to_string(version), version_at);
  GenConfig cfg;
  cfg.d = r.u32("d");
  cfg.G = r.u32("G");
  const std::size_t lambda_at = r.offset();
  cfg.lambda = std::bit_cast<double>(r.u64("lambda"));
  cfg.E = r.u32("E");
  cfg.K = r.u32("K");
  cfg.seed = r.u64("seed");
  cfg.groups_per_sample = 1;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent feature header: ") + e.what(), lambda_at - 8);
  }
  const std::uint64_t cells = static_cast<std::uint64_t>(cfg.d) * cfg.G;
  if (cells > r.size()) throw FormatError("truncated feature payload", r.size());
  const std::uint64_t payload = 4 * cells;
  if (r.remaining() < payload) throw FormatError("truncated feature payload", r.size());
  if (r.remaining() > payload)
    throw FormatError("trailing bytes after feature payload", r.offset() + payload);
  FeatureMatrix fm;
  fm.config = cfg;
  fm.F = Matrix(cfg.d, cfg.G);
  for (double& v : fm.F.values()) v = r.real(FloatWidth::kF32, "feature matrix");
  fm.probs = feature_probabilities(cfg.G, cfg.lambda);
  fm.groups = partition_groups(cfg.G, cfg.E);
  return fm;
}

// ---- checkpoints -----------------------------------------------------------

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      FloatWidth width) {
  const auto& p = ckpt.params;
  p.validate();
  require_finite(p.W, "checkpoint weights");
  std::uint32_t flags = width == FloatWidth::kF64 ? kCheckpointF64 : 0;
  if (ckpt.moments) flags |= kCheckpointHasMoments;
  ByteWriter w;
  w.magic(kCkptMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(p.hidden()));
  w.u32(static_cast<std::uint32_t>(p.input_dim()));
  w.u32(static_cast<std::uint32_t>(p.k));
  w.u64(ckpt.step);
  w.u32(flags);
  for (double v : p.W.values()) w.real(v, width);
  for (double v : p.b) w.real(v, width);
  if (ckpt.moments) {
    const auto& m = *ckpt.moments;
    if (m.m_W.rows() != p.hidden() || m.m_W.cols() != p.input_dim() || m.v_W.rows() != p.hidden() ||
        m.v_W.cols() != p.input_dim() || m.m_b.size() != p.hidden() || m.v_b.size() != p.hidden())
      throw DimensionError("checkpoint optimizer moments do not match parameter shapes");
    w.u64(m.step);
    for (double v : m.m_W.values()) w.real(v, width);
    for (double v : m.v_W.values()) w.real(v, width);
    for (double v : m.m_b) w.real(v, width);
    for (double v : m.v_b) w.real(v, width);
  }
  auto out = open_out(path);
  flush_bytes(out, w, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  r.magic(kCkptMagic, "MFRC");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  const std::uint32_t h = r.u32("h");
  const std::uint32_t d = r.u32("d");
  const std::uint32_t k = r.u32("k");
  Checkpoint c;
  c.step = r.u64("step");
  const std::size_t flags_at = r.offset();
  const std::uint32_t flags = r.u32("flags");
  if (h == 0 || d == 0) throw FormatError("checkpoint dimensions must be positive", 8);
  if (k < 1 || k > h) throw FormatError("checkpoint k outside [1, h]", 16);
  if (flags & ~(kCheckpointHasMoments | kCheckpointF64))
    throw FormatError("unknown checkpoint flag bits", flags_at);
  const FloatWidth width = (flags & kCheckpointF64) ? FloatWidth::kF64 : FloatWidth::kF32;
  const std::uint64_t fw = width == FloatWidth::kF64 ? 8 : 4;
  // h, d < 2^32 so h*d + h fits; the factor fw may not
  const std::uint64_t cells = static_cast<std::uint64_t>(h) * d + h;
  if (cells > r.size()) throw FormatError("truncated checkpoint payload", r.size());
  const std::uint64_t params = fw * cells;
  const bool has_moments = flags & kCheckpointHasMoments;
  const std::uint64_t expected = params + (has_moments ? 8 + 2 * params : 0);
  if (r.remaining() < expected) {
    if (has_moments && r.remaining() >= params)
      throw FormatError("flags declare optimizer moments but payload is missing them", r.size());
    throw FormatError("truncated checkpoint payload", r.size());
  }
  if (r.remaining() > expected)
    throw FormatError("trailing bytes after checkpoint payload (flags inconsistent with length)",
                      r.offset() + expected);
  c.params.W = Matrix(h, d);
  c.params.b.resize(h);
  c.params.k = k;
  for (double& v : c.params.W.values()) v = r.real(width, "weights");
  for (double& v : c.params.b) v = r.real(width, "bias");
  if (has_moments) {
    OptimizerMoments m;
    m.step = r.u64("adam step");
    m.m_W = Matrix(h, d);
    m.v_W = Matrix(h, d);
    m.m_b.resize(h);
    m.v_b.resize(h);
    for (double& v : m.m_W.values()) v = r.real(width, "moments");
    for (double& v : m.v_W.values()) v = r.real(width, "moments");
    for (double& v : m.m_b) v = r.real(width, "moments");
    for (double& v : m.v_b) v = r.real(width, "moments");
    c.moments = std::move(m);
  }
  return c;
}

// ---- metrics ---------------------------------------------------------------

namespace {
std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace

std::string format_metrics_line(const MetricsRecord& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.sae_id) + ",";
  s += fmt9(r.recon_loss) + "," + fmt9(r.penalty_raw) + "," + fmt9(r.alpha_eff) + ",";
  s += fmt9(r.mmcs_mean) + "," + fmt9(r.inactivity) + "," + (r.reinit_event ? "1" : "0");
  return s;
}

MetricsRecord parse_metrics_line(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 8) throw FormatError("metrics row needs 8 fields: " + line, 0);
  auto num = [](const std::string& s) {
    return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  MetricsRecord r;
  try {
    r.step = std::stoull(f[0]);
    r.sae_id = std::stoull(f[1]);
    r.recon_loss = num(f[2]);
    r.penalty_raw = num(f[3]);
    r.alpha_eff = num(f[4]);
    r.mmcs_mean = num(f[5]);
    r.inactivity = num(f[6]);
    r.reinit_event = f[7] == "1";
  } catch (const std::logic_error&) {
    throw FormatError("unparseable metrics row: " + line, 0);
  }
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open metrics log " + path.string());
  if (fresh) {
    out_ << kMetricsHeader << '\n';
    out_.flush();
    if (!out_) throw IoError("failed writing metrics log " + path.string());
  }
}

void MetricsWriter::append(const MetricsRecord& r) {
  out_ << format_metrics_line(r) << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing metrics log " + path_.string());
}

void append_metrics(const std::filesystem::path& path, const MetricsRecord& r) {
  MetricsWriter(path).append(r);
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw FormatError("metrics log header mismatch in " + path.string(), 0);
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_metrics_line(line));
  return rows;
}

}  // namespace mfr
