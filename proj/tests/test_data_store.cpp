#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstring>
#include <set>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "specgd/data_store.hpp"
#include "specgd/errors.hpp"
#include "support.hpp"

using namespace specgd;

namespace {

const TaskSpec kSvm{LossFamily::kSvmHinge, Regularizer::kNone, 0.0};

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<Example> small_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Example> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].features.resize(d);
    for (double& v : rows[i].features) v = normal(rng);
    rows[i].label = i % 3 == 0 ? -1.0 : 1.0;
  }
  return rows;
}

using RowKey = std::pair<std::vector<double>, double>;

std::multiset<RowKey> as_set(const std::vector<Example>& rows) {
  std::multiset<RowKey> s;
  for (const auto& e : rows) s.insert({e.features, e.label});
  return s;
}

std::vector<Example> scan_all(const Dataset& ds, std::uint64_t start) {
  std::vector<Example> out;
  auto stream = scan(ds, start);
  stream.for_each_example([&](ExampleView ex) { out.push_back({{ex.x.begin(), ex.x.end()}, ex.y}); });
  return out;
}

}  // namespace

TEST_CASE("header encodes to 32 little-endian bytes") {
  DatasetHeader h;
  h.n_examples = 0x0102030405060708ULL;
  h.dim = 0x0a0b0c0d;
  h.block_size = 7;
  h.shuffle_seed = 42;
  const auto raw = h.encode();
  CHECK(std::string(raw.begin(), raw.begin() + 4) == "SGD1");
  CHECK(raw[4] == 1);
  CHECK(raw[8] == 0x08);
  CHECK(raw[15] == 0x01);
  CHECK(raw[16] == 0x0d);
  CHECK(raw[20] == 7);
  CHECK(raw[24] == 42);
  const auto back = DatasetHeader::decode(raw);
  CHECK(back.n_examples == h.n_examples);
  CHECK(back.dim == h.dim);
  CHECK(back.block_size == 7);
  CHECK(back.shuffle_seed == 42);
}

TEST_CASE("file layout and checksum") {
  testing::TempDir dir;
  const std::vector<Example> rows = {{{1.5, -2.0}, 1.0}, {{0.25, 3.0}, -1.0}, {{-1.0, 0.0}, 1.0}};
  const Dataset ds = Dataset::from_examples(rows, 2, 5);
  ds.write(dir / "a.sgd");
  const auto bytes = file_bytes(dir / "a.sgd");
  // header + block of 2 (4 + 2*24 + 4) + block of 1 (4 + 24 + 4)
  CHECK(bytes.size() == 32 + 56 + 32);
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 32, 4);
  CHECK(count == 2);
  std::uint32_t crc = 0;
  std::memcpy(&crc, bytes.data() + 32 + 52, 4);
  CHECK(crc == specgd::crc32({reinterpret_cast<const unsigned char*>(bytes.data()) + 32, 52}));
}

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(specgd::crc32({reinterpret_cast<const unsigned char*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("round trip through a file is bit exact") {
  testing::TempDir dir;
  const auto rows = small_rows(1000, 13, 3);
  const Dataset mem = Dataset::from_examples(rows, 64, 9);
  mem.write(dir / "r.sgd");
  const Dataset loaded = Dataset::load(dir / "r.sgd");
  const Dataset streamed = Dataset::open(dir / "r.sgd");
  CHECK(loaded.in_memory());
  CHECK_FALSE(streamed.in_memory());
  const auto a = mem.examples();
  const auto b = loaded.examples();
  const auto c = streamed.examples();
  REQUIRE(a.size() == 1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features == b[i].features);
    CHECK(a[i].features == c[i].features);
    CHECK(a[i].label == c[i].label);
  }
  CHECK(as_set(a) == as_set(rows));
}

TEST_CASE("scans visit every example once from any start block") {
  const auto rows = small_rows(1000, 4, 5);
  const Dataset ds = Dataset::from_examples(rows, 64, 1);
  CHECK(ds.num_blocks() == 16);
  const auto full = as_set(rows);
  for (std::uint64_t start : {0u, 1u, 7u, 15u}) {
    const auto seen = scan_all(ds, start);
    CHECK(seen.size() == 1000);
    CHECK(as_set(seen) == full);
  }
  auto s = scan(ds, 15);
  CHECK(s.next_block()->index == 15);
  CHECK(s.next_block()->index == 0);
  CHECK(s.blocks_remaining() == 14);
  CHECK_THROWS_AS(scan(ds, 16), StructuralError);
}

TEST_CASE("streaming scan detects a corrupted block") {
  testing::TempDir dir;
  const Dataset ds = Dataset::from_examples(small_rows(300, 3, 1), 100, 1);
  ds.write(dir / "c.sgd");
  {
    std::fstream f(dir / "c.sgd", std::ios::in | std::ios::out | std::ios::binary);
    // flip one bit inside the second block's payload
    const std::streamoff off = 32 + (4 + 100 * 32 + 4) + 10;
    f.seekg(off);
    char ch = 0;
    f.read(&ch, 1);
    ch ^= 0x10;
    f.seekp(off);
    f.write(&ch, 1);
  }
  const Dataset streamed = Dataset::open(dir / "c.sgd");
  auto stream = scan(streamed, 0);
  CHECK_NOTHROW(stream.next_block());
  CHECK_THROWS_AS(stream.next_block(), IoError);
  CHECK_THROWS_AS(Dataset::load(dir / "c.sgd"), IoError);
}

TEST_CASE("truncated and foreign files are rejected") {
  testing::TempDir dir;
  Dataset::from_examples(small_rows(10, 2, 1), 4, 1).write(dir / "t.sgd");
  auto bytes = file_bytes(dir / "t.sgd");
  {
    std::ofstream out(dir / "short.sgd", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(Dataset::open(dir / "short.sgd"), IoError);
  bytes[0] = 'X';
  {
    std::ofstream out(dir / "magic.sgd", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(Dataset::open(dir / "magic.sgd"), IoError);
  CHECK_THROWS_AS(Dataset::open(dir / "missing.sgd"), IoError);
}

TEST_CASE("generate: separable without noise, deterministic per seed") {
  testing::TempDir dir;
  const auto g = generate(1000, 10, kSvm, 0.0, 7);
  CHECK(g.data.size() == 1000);
  CHECK(g.data.dim() == 10);
  for (const auto& e : g.data.examples()) CHECK(e.label * dot(g.truth, e.features) > 0.0);
  g.data.write(dir / "a.sgd");
  generate(1000, 10, kSvm, 0.0, 7).data.write(dir / "b.sgd");
  generate(1000, 10, kSvm, 0.0, 8).data.write(dir / "c.sgd");
  CHECK(file_bytes(dir / "a.sgd") == file_bytes(dir / "b.sgd"));
  CHECK(file_bytes(dir / "a.sgd") != file_bytes(dir / "c.sgd"));
}

TEST_CASE("generate: half noise makes labels independent of features") {
  const auto g = generate(10000, 10, kSvm, 0.5, 21);
  std::size_t agree = 0;
  for (const auto& e : g.data.examples()) agree += e.label * dot(g.truth, e.features) > 0.0;
  CHECK(std::fabs(static_cast<double>(agree) / 10000.0 - 0.5) <= 0.05);
}

TEST_CASE("generate rejects bad arguments") {
  CHECK_THROWS_AS(generate(0, 3, kSvm, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(generate(3, 0, kSvm, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(generate(3, 3, kSvm, 1.5, 1), ConfigError);
}

TEST_CASE("convert csv") {
  std::istringstream in("1.0,2.0,+1\n# comment\n\n3.5,-4,-1\n0,0,1\n");
  const Dataset ds = convert(in, TextFormat::kCsv, 1024, 3);
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.num_blocks() == 1);
  double label_sum = 0.0;
  for (const auto& e : ds.examples()) label_sum += e.label;
  CHECK(label_sum == 1.0);
  const std::multiset<RowKey> want = {{{1.0, 2.0}, 1.0}, {{3.5, -4.0}, -1.0}, {{0.0, 0.0}, 1.0}};
  CHECK(as_set(ds.examples()) == want);
}

TEST_CASE("convert label sum oracle on a larger file") {
  std::mt19937_64 rng(4);
  std::ostringstream text;
  double sum = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const int y = (rng() & 1) ? 1 : -1;
    sum += y;
    text << (rng() % 100) / 7.0 << ',' << -(rng() % 50) / 3.0 << ',' << y << '\n';
  }
  std::istringstream in(text.str());
  const Dataset ds = convert(in, TextFormat::kCsv, 128, 8);
  double seen = 0.0;
  scan(ds, 17).for_each_example([&](ExampleView ex) { seen += ex.y; });
  CHECK(seen == sum);
}

TEST_CASE("convert errors name the offending line") {
  auto fails_at = [](const std::string& text, TextFormat f, std::uint64_t line) {
    std::istringstream in(text);
    try {
      convert(in, f, 16, 1);
    } catch (const ParseError& e) {
      CHECK(e.line() == line);
      return;
    }
    FAIL("expected a parse error");
  };
  fails_at("1,2,1\n3,4,0\n", TextFormat::kCsv, 2);
  fails_at("1,2,1\n3,4,5,1\n", TextFormat::kCsv, 2);
  fails_at("1,2,1\n\n3,x,1\n", TextFormat::kCsv, 3);
  fails_at("1,2,2\n", TextFormat::kCsv, 1);
  fails_at("+1 1:2 3:4\n-1 2:oops\n", TextFormat::kSparse, 2);
  fails_at("+1 1:2\n0 1:1\n", TextFormat::kSparse, 2);
  fails_at("+1 0:2\n", TextFormat::kSparse, 1);
}

TEST_CASE("convert sparse densifies to the largest index") {
  std::istringstream in("+1 1:2 3:4\n-1 2:-1.5\n");
  const Dataset ds = convert(in, TextFormat::kSparse, 8, 2);
  CHECK(ds.dim() == 3);
  const std::multiset<RowKey> want = {{{2.0, 0.0, 4.0}, 1.0}, {{0.0, -1.5, 0.0}, -1.0}};
  CHECK(as_set(ds.examples()) == want);
}

TEST_CASE("partition is round robin and covers every block once") {
  const Dataset ds = Dataset::from_examples(small_rows(8 * 16 - 5, 2, 1), 16, 1);
  CHECK(ds.num_blocks() == 8);
  const auto one = partition(ds, 1);
  CHECK(one.blocks_of(0).size() == 8);
  const auto four = partition(ds, 4);
  std::uint64_t total = 0;
  std::vector<int> hits(8, 0);
  for (std::uint32_t p = 0; p < 4; ++p) {
    CHECK(four.blocks_of(p).size() == 2);
    for (auto b : four.blocks_of(p)) ++hits[b];
    total += four.examples_in(p, ds.header());
  }
  CHECK(total == ds.size());
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  const auto three = partition(ds, 3);
  for (std::uint32_t p = 0; p < 3; ++p) CHECK(three.blocks_of(p).size() >= 2);
  CHECK_THROWS_AS(partition(ds, 9), ConfigError);
  CHECK_THROWS_AS(partition(ds, 0), ConfigError);
}

TEST_CASE("shuffle places a fixed row uniformly (chi-square, 1%)") {
  // Row 0 of 8 over 800 seeds: expected 100 per position, 7 dof, 1% critical 18.475.
  std::vector<Example> rows(8);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {{static_cast<double>(i)}, 1.0};
  std::vector<int> counts(8, 0);
  const int seeds = 800;
  for (int s = 0; s < seeds; ++s) {
    const auto out = Dataset::from_examples(rows, 8, static_cast<std::uint64_t>(s)).examples();
    for (std::size_t k = 0; k < out.size(); ++k)
      if (out[k].features[0] == 0.0) ++counts[k];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  CHECK(chi2 < 18.475);
}

TEST_CASE("scan prefixes behave like random samples") {
  const auto g = generate(20000, 3, kSvm, 0.1, 33, 100);
  const auto& ds = g.data;
  double mean = 0.0, sq = 0.0;
  for (const auto& e : ds.examples()) {
    mean += e.features[0];
    sq += e.features[0] * e.features[0];
  }
  const double n_all = static_cast<double>(ds.size());
  mean /= n_all;
  const double var = sq / n_all - mean * mean;
  const std::uint64_t prefix = 2000;
  const double se = std::sqrt(var / prefix * (1.0 - prefix / n_all));
  std::mt19937_64 rng(2);
  int inside = 0;
  for (int t = 0; t < 100; ++t) {
    const std::uint64_t start = rng() % ds.num_blocks();
    auto stream = scan(ds, start);
    double s = 0.0;
    std::uint64_t n = 0;
    while (n < prefix) {
      const auto b = stream.next_block();
      for (std::size_t r = 0; r < b->count; ++r) s += b->row(r)[0];
      n += b->count;
    }
    inside += std::fabs(s / n - mean) <= 2.5758 * se;
  }
  // 99% bound per trial; allow the binomial spread of 100 trials.
  CHECK(inside >= 95);
}

TEST_CASE("reshuffle keeps the multiset") {
  const auto rows = small_rows(300, 3, 9);
  const Dataset ds = Dataset::from_examples(rows, 32, 1);
  const Dataset again = ds.reshuffle(2);
  CHECK(as_set(again.examples()) == as_set(rows));
  CHECK(again.examples()[0].features != ds.examples()[0].features);
}
