#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specgd/detail/aligned.hpp"
#include "specgd/task_math.hpp"

namespace specgd {

inline constexpr std::array<char, 4> kDatasetMagic = {'S', 'G', 'D', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kDefaultBlockSize = 1024;
inline constexpr std::size_t kHeaderBytes = 32;

struct DatasetHeader {
  std::array<char, 4> magic = kDatasetMagic;
  std::uint32_t version = kDatasetVersion;
  std::uint64_t n_examples = 0;
  std::uint32_t dim = 0;
  std::uint32_t block_size = kDefaultBlockSize;
  std::uint64_t shuffle_seed = 0;

  std::uint64_t num_blocks() const noexcept { return (n_examples + block_size - 1) / block_size; }
  std::uint32_t block_count(std::uint64_t block) const noexcept;
  std::uint64_t block_first_row(std::uint64_t block) const noexcept { return block * block_size; }

  /// Little-endian 32-byte encoding.
  std::array<unsigned char, kHeaderBytes> encode() const;
  static DatasetHeader decode(std::span<const unsigned char> bytes);
};

/// One storage block. Features are row-major with a zero-padded row stride.
/// A view from a file-backed reader stays valid until that reader's next read.
struct BlockView {
  std::uint64_t index = 0;
  std::uint64_t first_row = 0;
  std::size_t count = 0;
  std::size_t dim = 0;
  std::size_t stride = 0;
  const double* features = nullptr;
  const double* labels = nullptr;

  const double* row(std::size_t r) const noexcept { return features + r * stride; }
  ExampleView example(std::size_t r) const noexcept { return {{row(r), dim}, labels[r]}; }
};

class Dataset;

/// Per-consumer block access. One reader must not be shared between threads.
class BlockReader {
 public:
  explicit BlockReader(const Dataset& ds);
  BlockView read(std::uint64_t block);

 private:
  const Dataset* ds_;
  std::ifstream file_;
  std::vector<unsigned char> bytes_;
  detail::AlignedDoubles features_;
  std::vector<double> labels_;
};

/// Immutable example store in randomized order, either held in memory or
/// streamed block by block from a file with checksum verification.
class Dataset {
 public:
  Dataset() = default;

  using RowFill = std::function<void(std::uint64_t source_row, double* x, double& y)>;

  /// Builds an in-memory dataset of n rows. `fill` is called for source rows
  /// 0..n-1 in order and writes into the slot that the seeded Fisher-Yates
  /// permutation assigns to that row. x has room for the padded stride.
  static Dataset build(std::uint64_t n, std::uint32_t d, std::uint32_t block_size, std::uint64_t seed,
                       const RowFill& fill);

  /// Builds an in-memory dataset whose rows are a Fisher-Yates permutation of `rows`.
  static Dataset from_examples(std::span<const Example> rows, std::uint32_t block_size, std::uint64_t seed);
  /// Reads and verifies a whole file into memory.
  static Dataset load(const std::filesystem::path& path);
  /// Opens a file for streaming scans; blocks are verified as they are read.
  static Dataset open(const std::filesystem::path& path);

  void write(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;

  /// In-memory copy with the rows re-permuted by a fresh Fisher-Yates shuffle.
  Dataset reshuffle(std::uint64_t seed) const;

  const DatasetHeader& header() const noexcept { return header_; }
  std::uint64_t size() const noexcept { return header_.n_examples; }
  std::size_t dim() const noexcept { return header_.dim; }
  std::size_t stride() const noexcept { return detail::padded_dim(header_.dim); }
  std::uint64_t num_blocks() const noexcept { return header_.num_blocks(); }
  bool in_memory() const noexcept { return storage_ != nullptr; }
  const std::filesystem::path& path() const noexcept { return path_; }

  BlockReader reader() const { return BlockReader(*this); }

  /// In-memory block access.
  BlockView block(std::uint64_t b) const;
  /// Every example in storage order.
  std::vector<Example> examples() const;

 private:
  friend class BlockReader;

  struct Storage {
    detail::AlignedDoubles features;
    std::vector<double> labels;
  };

  DatasetHeader header_;
  std::shared_ptr<const Storage> storage_;
  std::filesystem::path path_;
};

/// Sequential scan over all blocks starting at `start_block` and wrapping.
class ScanStream {
 public:
  ScanStream(const Dataset& ds, std::uint64_t start_block);

  std::optional<BlockView> next_block();
  std::uint64_t blocks_remaining() const noexcept { return remaining_; }

  template <class F>
  void for_each_example(F&& fn) {
    while (auto b = next_block())
      for (std::size_t r = 0; r < b->count; ++r) fn(b->example(r));
  }

 private:
  const Dataset* ds_;
  BlockReader reader_;
  std::uint64_t next_;
  std::uint64_t remaining_;
};

ScanStream scan(const Dataset& ds, std::uint64_t start_block);

/// Round-robin assignment of blocks to workers.
struct PartitionSet {
  std::uint32_t m_partitions = 1;
  std::vector<std::uint32_t> assignment;

  std::vector<std::uint64_t> blocks_of(std::uint32_t p) const;
  std::uint64_t examples_in(std::uint32_t p, const DatasetHeader& h) const;
};

PartitionSet partition(const Dataset& ds, std::uint32_t m);

struct GeneratedData {
  Dataset data;
  std::vector<double> truth;
};

/// Synthetic linearly separable data with label noise: x ~ N(0, I),
/// y = sign(truth . x), each label flipped with probability `noise`.
GeneratedData generate(std::uint64_t n, std::uint32_t d, const TaskSpec& task, double noise, std::uint64_t seed,
                       std::uint32_t block_size = kDefaultBlockSize);

enum class TextFormat { kCsv, kSparse };

/// CSV rows are "f1,...,fd,label"; sparse rows are "label idx:val ..." with
/// 1-based indices, densified to the largest index seen.
Dataset convert(std::istream& in, TextFormat format, std::uint32_t block_size, std::uint64_t seed);
Dataset convert_file(const std::filesystem::path& path, TextFormat format, std::uint32_t block_size,
                     std::uint64_t seed);

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed = 0);

}  // namespace specgd
