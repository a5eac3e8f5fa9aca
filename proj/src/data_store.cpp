#include "specgd/data_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <random>
#include <sstream>
#include <string_view>

#include "specgd/errors.hpp"

namespace specgd {

namespace {

template <class T>
void put(unsigned char* dst, T v) noexcept {
  std::memcpy(dst, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(dst, dst + sizeof(T));
}

template <class T>
T get(const unsigned char* src) noexcept {
  unsigned char tmp[sizeof(T)];
  std::memcpy(tmp, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + sizeof(T));
  T v;
  std::memcpy(&v, tmp, sizeof(T));
  return v;
}

std::size_t row_bytes(std::uint32_t d) noexcept { return (static_cast<std::size_t>(d) + 1) * sizeof(double); }

std::size_t block_bytes(const DatasetHeader& h, std::uint32_t count) noexcept {
  return 4 + count * row_bytes(h.dim) + 4;
}

std::uint64_t block_offset(const DatasetHeader& h, std::uint64_t b) noexcept {
  return kHeaderBytes + b * block_bytes(h, h.block_size);
}

void check_header(const DatasetHeader& h) {
  if (h.magic != kDatasetMagic) throw IoError("not a dataset file (bad magic)");
  if (h.version != kDatasetVersion) throw IoError("unsupported dataset version " + std::to_string(h.version));
  if (h.n_examples == 0 || h.dim == 0 || h.block_size == 0)
    throw IoError("dataset header has a zero count, dimension or block size");
}

std::vector<std::uint64_t> fisher_yates(std::uint64_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> perm(n);
  for (std::uint64_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::uint64_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

}  // namespace

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed) {
  uLong c = seed;
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(chunk));
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t DatasetHeader::block_count(std::uint64_t block) const noexcept {
  const std::uint64_t first = block_first_row(block);
  if (first >= n_examples) return 0;
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(block_size, n_examples - first));
}

std::array<unsigned char, kHeaderBytes> DatasetHeader::encode() const {
  std::array<unsigned char, kHeaderBytes> out{};
  std::memcpy(out.data(), magic.data(), 4);
  put(out.data() + 4, version);
  put(out.data() + 8, n_examples);
  put(out.data() + 16, dim);
  put(out.data() + 20, block_size);
  put(out.data() + 24, shuffle_seed);
  return out;
}

DatasetHeader DatasetHeader::decode(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderBytes) throw IoError("truncated dataset header");
  DatasetHeader h;
  std::memcpy(h.magic.data(), bytes.data(), 4);
  h.version = get<std::uint32_t>(bytes.data() + 4);
  h.n_examples = get<std::uint64_t>(bytes.data() + 8);
  h.dim = get<std::uint32_t>(bytes.data() + 16);
  h.block_size = get<std::uint32_t>(bytes.data() + 20);
  h.shuffle_seed = get<std::uint64_t>(bytes.data() + 24);
  return h;
}

// ---------------------------------------------------------------------------
// BlockReader

BlockReader::BlockReader(const Dataset& ds) : ds_(&ds) {
  if (ds.in_memory()) return;
  file_.open(ds.path_, std::ios::binary);
  if (!file_) throw IoError("cannot open " + ds.path_.string());
  const std::size_t stride = ds.stride();
  features_.assign(static_cast<std::size_t>(ds.header_.block_size) * stride, 0.0);
  labels_.assign(ds.header_.block_size, 0.0);
}

BlockView BlockReader::read(std::uint64_t block) {
  if (ds_->in_memory()) return ds_->block(block);
  const DatasetHeader& h = ds_->header_;
  if (block >= h.num_blocks()) throw StructuralError("block index out of range");
  const std::uint32_t expected = h.block_count(block);
  bytes_.resize(block_bytes(h, expected));
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(block_offset(h, block)));
  if (!file_.read(reinterpret_cast<char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size())))
    throw IoError("truncated dataset: block " + std::to_string(block));
  const std::size_t payload = bytes_.size() - 4;
  const std::uint32_t stored_crc = get<std::uint32_t>(bytes_.data() + payload);
  if (crc32({bytes_.data(), payload}) != stored_crc)
    throw IoError("checksum mismatch in block " + std::to_string(block));
  if (get<std::uint32_t>(bytes_.data()) != expected)
    throw IoError("unexpected example count in block " + std::to_string(block));

  const std::size_t d = h.dim;
  const std::size_t stride = ds_->stride();
  const unsigned char* p = bytes_.data() + 4;
  for (std::uint32_t r = 0; r < expected; ++r) {
    double* row = features_.data() + r * stride;
    for (std::size_t j = 0; j < d; ++j, p += 8) row[j] = get<double>(p);
    labels_[r] = get<double>(p);
    p += 8;
  }
  return {block, h.block_first_row(block), expected, d, stride, features_.data(), labels_.data()};
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::build(std::uint64_t n, std::uint32_t d, std::uint32_t block_size, std::uint64_t seed,
                       const RowFill& fill) {
  if (n == 0 || d == 0) throw ConfigError("dataset needs at least one example and one feature");
  if (block_size == 0) throw ConfigError("block size must be >= 1");
  Dataset ds;
  ds.header_.n_examples = n;
  ds.header_.dim = d;
  ds.header_.block_size = block_size;
  ds.header_.shuffle_seed = seed;
  const std::size_t stride = detail::padded_dim(d);
  Storage st;
  st.features.assign(n * stride, 0.0);
  st.labels.assign(n, 0.0);
  const std::vector<std::uint64_t> perm = fisher_yates(n, seed);
  std::vector<std::uint64_t> dest(n);
  for (std::uint64_t k = 0; k < n; ++k) dest[perm[k]] = k;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t k = dest[i];
    fill(i, st.features.data() + k * stride, st.labels[k]);
  }
  ds.storage_ = std::make_shared<const Storage>(std::move(st));
  return ds;
}

Dataset Dataset::from_examples(std::span<const Example> rows, std::uint32_t block_size, std::uint64_t seed) {
  if (rows.empty()) throw ConfigError("dataset needs at least one example");
  const std::size_t d = rows.front().features.size();
  for (const Example& e : rows)
    if (e.features.size() != d) throw StructuralError("ragged examples");
  return build(rows.size(), static_cast<std::uint32_t>(d), block_size, seed,
               [&](std::uint64_t i, double* x, double& y) {
                 std::copy(rows[i].features.begin(), rows[i].features.end(), x);
                 y = rows[i].label;
               });
}

Dataset Dataset::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, kHeaderBytes> raw{};
  if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size())) throw IoError("truncated dataset header");
  Dataset ds;
  ds.header_ = DatasetHeader::decode(raw);
  check_header(ds.header_);
  const DatasetHeader& h = ds.header_;
  const std::uint64_t last = h.num_blocks() - 1;
  const std::uint64_t expected = block_offset(h, last) + block_bytes(h, h.block_count(last));
  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string());
  if (actual != expected)
    throw IoError("dataset size " + std::to_string(actual) + " does not match header (" + std::to_string(expected) +
                  " bytes)");
  ds.path_ = path;
  return ds;
}

Dataset Dataset::load(const std::filesystem::path& path) {
  Dataset file = open(path);
  const DatasetHeader& h = file.header_;
  const std::size_t stride = file.stride();
  Storage st;
  st.features.assign(h.n_examples * stride, 0.0);
  st.labels.assign(h.n_examples, 0.0);
  BlockReader reader(file);
  for (std::uint64_t b = 0; b < h.num_blocks(); ++b) {
    const BlockView v = reader.read(b);
    std::copy(v.features, v.features + v.count * stride, st.features.data() + v.first_row * stride);
    std::copy(v.labels, v.labels + v.count, st.labels.data() + v.first_row);
  }
  Dataset ds;
  ds.header_ = h;
  ds.path_ = path;
  ds.storage_ = std::make_shared<const Storage>(std::move(st));
  return ds;
}

void Dataset::write(std::ostream& out) const {
  const auto head = header_.encode();
  out.write(reinterpret_cast<const char*>(head.data()), head.size());
  BlockReader reader(*this);
  std::vector<unsigned char> buf;
  for (std::uint64_t b = 0; b < num_blocks(); ++b) {
    const BlockView v = reader.read(b);
    buf.resize(block_bytes(header_, static_cast<std::uint32_t>(v.count)));
    put(buf.data(), static_cast<std::uint32_t>(v.count));
    unsigned char* p = buf.data() + 4;
    for (std::size_t r = 0; r < v.count; ++r) {
      const double* x = v.row(r);
      for (std::size_t j = 0; j < v.dim; ++j, p += 8) put(p, x[j]);
      put(p, v.labels[r]);
      p += 8;
    }
    const std::size_t payload = buf.size() - 4;
    put(buf.data() + payload, crc32({buf.data(), payload}));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failed");
}

void Dataset::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset Dataset::reshuffle(std::uint64_t seed) const {
  if (!in_memory()) return load(path_).reshuffle(seed);
  const std::size_t s = stride();
  const Storage& src = *storage_;
  return build(size(), header_.dim, header_.block_size, seed, [&](std::uint64_t i, double* x, double& y) {
    std::copy(src.features.data() + i * s, src.features.data() + (i + 1) * s, x);
    y = src.labels[i];
  });
}

BlockView Dataset::block(std::uint64_t b) const {
  if (!in_memory()) throw StructuralError("block(): dataset is not in memory");
  if (b >= num_blocks()) throw StructuralError("block index out of range");
  const std::uint64_t first = header_.block_first_row(b);
  const std::size_t s = stride();
  return {b, first, header_.block_count(b), header_.dim, s, storage_->features.data() + first * s,
          storage_->labels.data() + first};
}

std::vector<Example> Dataset::examples() const {
  std::vector<Example> out;
  out.reserve(size());
  BlockReader reader(*this);
  for (std::uint64_t b = 0; b < num_blocks(); ++b) {
    const BlockView v = reader.read(b);
    for (std::size_t r = 0; r < v.count; ++r)
      out.push_back({std::vector<double>(v.row(r), v.row(r) + v.dim), v.labels[r]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scanning and partitioning

ScanStream::ScanStream(const Dataset& ds, std::uint64_t start_block)
    : ds_(&ds), reader_(ds), next_(start_block), remaining_(ds.num_blocks()) {
  if (start_block >= ds.num_blocks()) throw StructuralError("start block out of range");
}

std::optional<BlockView> ScanStream::next_block() {
  if (remaining_ == 0) return std::nullopt;
  const BlockView v = reader_.read(next_);
  next_ = next_ + 1 == ds_->num_blocks() ? 0 : next_ + 1;
  --remaining_;
  return v;
}

ScanStream scan(const Dataset& ds, std::uint64_t start_block) { return ScanStream(ds, start_block); }

std::vector<std::uint64_t> PartitionSet::blocks_of(std::uint32_t p) const {
  std::vector<std::uint64_t> out;
  for (std::uint64_t b = 0; b < assignment.size(); ++b)
    if (assignment[b] == p) out.push_back(b);
  return out;
}

std::uint64_t PartitionSet::examples_in(std::uint32_t p, const DatasetHeader& h) const {
  std::uint64_t n = 0;
  for (std::uint64_t b = 0; b < assignment.size(); ++b)
    if (assignment[b] == p) n += h.block_count(b);
  return n;
}

PartitionSet partition(const Dataset& ds, std::uint32_t m) {
  if (m == 0) throw ConfigError("partition count must be >= 1");
  if (m > ds.num_blocks())
    throw ConfigError("partition count " + std::to_string(m) + " exceeds block count " +
                      std::to_string(ds.num_blocks()));
  PartitionSet ps;
  ps.m_partitions = m;
  ps.assignment.resize(ds.num_blocks());
  for (std::uint64_t b = 0; b < ps.assignment.size(); ++b) ps.assignment[b] = static_cast<std::uint32_t>(b % m);
  return ps;
}

// ---------------------------------------------------------------------------
// Generation

GeneratedData generate(std::uint64_t n, std::uint32_t d, const TaskSpec& task, double noise, std::uint64_t seed,
                       std::uint32_t block_size) {
  validate(task);
  if (n == 0 || d == 0) throw ConfigError("generate: n and d must be >= 1");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("generate: noise must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GeneratedData out;
  out.truth.resize(d);
  for (double& w : out.truth) w = normal(rng);

  std::vector<double> x(d);
  auto fill = [&](std::uint64_t, double* row, double& y) {
    for (std::uint32_t j = 0; j < d; ++j) row[j] = x[j] = normal(rng);
    y = dot(out.truth, x) >= 0.0 ? 1.0 : -1.0;
    if (unit(rng) < noise) y = -y;
  };
  out.data = Dataset::build(n, d, block_size, seed, fill);
  return out;
}

// ---------------------------------------------------------------------------
// Text conversion

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view tok, std::size_t line, const char* what) {
  tok = trim(tok);
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("non-numeric ") + what + " '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw ParseError(line, std::string("non-finite ") + what);
  return v;
}

double parse_label(std::string_view tok, std::size_t line) {
  const double v = parse_number(tok, line, "label");
  if (v != 1.0 && v != -1.0) throw ParseError(line, "label must be -1 or +1, got '" + std::string(trim(tok)) + "'");
  return v;
}

bool skip_line(std::string_view s) { return s.empty() || s.front() == '#'; }

struct TextRows {
  std::size_t d = 0;
  std::vector<double> x;  // n * d
  std::vector<double> y;
};

TextRows read_csv(std::istream& in) {
  TextRows rows;
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view s = trim(raw);
    if (skip_line(s)) continue;
    fields.clear();
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = s.find(',', pos);
      fields.push_back(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (fields.size() < 2) throw ParseError(line, "expected at least one feature and a label");
    if (rows.d == 0) rows.d = fields.size() - 1;
    if (fields.size() - 1 != rows.d)
      throw ParseError(line, "expected " + std::to_string(rows.d) + " features, found " +
                                 std::to_string(fields.size() - 1));
    for (std::size_t j = 0; j < rows.d; ++j) rows.x.push_back(parse_number(fields[j], line, "feature"));
    rows.y.push_back(parse_label(fields.back(), line));
  }
  return rows;
}

TextRows read_sparse(std::istream& in) {
  struct Entry {
    std::uint64_t row;
    std::size_t idx;
    double v;
  };
  std::vector<Entry> entries;
  TextRows rows;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view s = trim(raw);
    if (skip_line(s)) continue;
    std::istringstream toks{std::string(s)};
    std::string tok;
    toks >> tok;
    const std::uint64_t row = rows.y.size();
    rows.y.push_back(parse_label(tok, line));
    std::size_t prev = 0;
    while (toks >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError(line, "expected idx:value, got '" + tok + "'");
      const std::string_view idx_tok(tok.data(), colon);
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
      if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size() || idx == 0)
        throw ParseError(line, "bad feature index '" + std::string(idx_tok) + "'");
      if (idx <= prev) throw ParseError(line, "feature indices must be strictly increasing");
      prev = idx;
      const double v = parse_number(std::string_view(tok).substr(colon + 1), line, "feature");
      entries.push_back({row, idx, v});
      rows.d = std::max(rows.d, idx);
    }
  }
  if (rows.d == 0 && !rows.y.empty()) rows.d = 1;
  rows.x.assign(rows.y.size() * rows.d, 0.0);
  for (const Entry& e : entries) rows.x[e.row * rows.d + (e.idx - 1)] = e.v;
  return rows;
}

}  // namespace

Dataset convert(std::istream& in, TextFormat format, std::uint32_t block_size, std::uint64_t seed) {
  const TextRows rows = format == TextFormat::kCsv ? read_csv(in) : read_sparse(in);
  if (rows.y.empty()) throw ParseError(0, "no examples in input");
  const std::size_t d = rows.d;
  return Dataset::build(rows.y.size(), static_cast<std::uint32_t>(d), block_size, seed,
                        [&](std::uint64_t i, double* x, double& y) {
                          std::copy(rows.x.begin() + i * d, rows.x.begin() + (i + 1) * d, x);
                          y = rows.y[i];
                        });
}

Dataset convert_file(const std::filesystem::path& path, TextFormat format, std::uint32_t block_size,
                     std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return convert(in, format, block_size, seed);
}

}  // namespace specgd
