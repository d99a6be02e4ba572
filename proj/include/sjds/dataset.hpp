#pragma once

// SJDS on-disk dataset: a fixed 24-byte header followed by N rows of p
// little-endian IEEE-754 doubles, row-major.
//
//   offset  size  field
//   0       4     magic "SJDS"
//   4       4     version (u32, currently 1)
//   8       8     row count N (u64)
//   16      4     column count p (u32)
//   20      1     dtype code (u8, 0 = float64)
//   21      3     zero padding
//
// Row i starts at byte 24 + i*p*8, so any row is one offset computation away.

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sjds/error.hpp"
#include "sjds/matrix.hpp"

namespace sjds {

inline constexpr std::array<char, 4> kMagic = {'S', 'J', 'D', 'S'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;
inline constexpr std::uint8_t kDtypeFloat64 = 0;

struct DatasetHeader {
  std::uint32_t version = kFormatVersion;
  std::uint64_t rows = 0;  // N
  std::uint32_t cols = 0;  // p
  std::uint8_t dtype = kDtypeFloat64;

  std::uint64_t row_bytes() const noexcept { return std::uint64_t{cols} * sizeof(double); }
  std::uint64_t file_bytes() const noexcept { return kHeaderBytes + rows * row_bytes(); }

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

namespace detail {

template <typename U>
void store_le(std::byte* out, U value) noexcept {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out[b] = static_cast<std::byte>((value >> (8 * b)) & 0xFF);
  }
}

template <typename U>
U load_le(const std::byte* in) noexcept {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    value |= static_cast<U>(std::to_integer<std::uint8_t>(in[b])) << (8 * b);
  }
  return value;
}

inline void store_double(std::byte* out, double x) noexcept {
  store_le(out, std::bit_cast<std::uint64_t>(x));
}

inline double load_double(const std::byte* in) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    double x;
    std::memcpy(&x, in, sizeof x);
    return x;
  } else {
    return std::bit_cast<double>(load_le<std::uint64_t>(in));
  }
}

}  // namespace detail

inline std::array<std::byte, kHeaderBytes> encode_header(const DatasetHeader& h) noexcept {
  std::array<std::byte, kHeaderBytes> out{};
  std::memcpy(out.data(), kMagic.data(), kMagic.size());
  detail::store_le(out.data() + 4, h.version);
  detail::store_le(out.data() + 8, h.rows);
  detail::store_le(out.data() + 16, h.cols);
  out[20] = static_cast<std::byte>(h.dtype);
  return out;
}

// Validates magic, version and dtype. Length is checked by open_dataset,
// which knows the file size.
inline DatasetHeader decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("not an SJDS file");
  }
  DatasetHeader h;
  h.version = detail::load_le<std::uint32_t>(bytes.data() + 4);
  h.rows = detail::load_le<std::uint64_t>(bytes.data() + 8);
  h.cols = detail::load_le<std::uint32_t>(bytes.data() + 16);
  h.dtype = std::to_integer<std::uint8_t>(bytes[20]);
  if (h.version != kFormatVersion) {
    throw FormatError("unsupported SJDS version " + std::to_string(h.version));
  }
  if (h.dtype != kDtypeFloat64) {
    throw FormatError("unsupported dtype " + std::to_string(h.dtype));
  }
  if (h.rows == 0 || h.cols == 0) {
    throw FormatError("empty dataset (N and p must be >= 1)");
  }
  return h;
}

// Streams rows into a new SJDS file. The row count is patched into the header
// by finish(); a writer destroyed before finish() removes its partial file.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path path, std::uint32_t cols)
      : path_(std::move(path)), cols_(cols), row_buf_(std::size_t{cols} * sizeof(double)) {
    if (cols == 0) throw ArgumentError("dataset needs at least one column");
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw FormatError("cannot open '" + path_.string() + "' for writing");
    const auto placeholder = encode_header({kFormatVersion, 0, cols_, kDtypeFloat64});
    write(placeholder);
  }

  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  ~DatasetWriter() {
    if (!finished_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }

  void append(std::span<const double> row) {
    if (row.size() != cols_) throw ArgumentError("row width does not match dataset columns");
    for (std::size_t j = 0; j < row.size(); ++j) {
      detail::store_double(row_buf_.data() + j * sizeof(double), row[j]);
    }
    write(row_buf_);
    ++rows_;
  }

  std::uint64_t rows() const noexcept { return rows_; }

  DatasetHeader finish() {
    if (rows_ == 0) throw FormatError("refusing to write a dataset with zero rows");
    DatasetHeader h{kFormatVersion, rows_, cols_, kDtypeFloat64};
    out_.seekp(0);
    write(encode_header(h));
    out_.close();
    if (!out_) throw FormatError("write failed for '" + path_.string() + "'");
    finished_ = true;
    return h;
  }

 private:
  void write(std::span<const std::byte> bytes) {
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw FormatError("write failed for '" + path_.string() + "'");
  }

  std::filesystem::path path_;
  std::uint32_t cols_;
  std::uint64_t rows_ = 0;
  std::vector<std::byte> row_buf_;
  std::ofstream out_;
  bool finished_ = false;
};

inline DatasetHeader write_dataset(const std::filesystem::path& path, const RowMatrix& m) {
  DatasetWriter w(path, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) w.append(m.row(i));
  return w.finish();
}

struct RecordBatch {
  RowMatrix rows;
  std::vector<std::uint64_t> source_indices;
};

// Read-only view over an SJDS file backed by a private memory mapping.
// Copies share the mapping; concurrent reads from any number of threads are
// safe because nothing is ever written through it.
class DatasetHandle {
 public:
  const DatasetHeader& header() const noexcept { return header_; }
  const std::string& path() const noexcept { return path_; }
  std::uint64_t rows() const noexcept { return header_.rows; }
  std::uint32_t cols() const noexcept { return header_.cols; }

  // Copies row i into out (size p). No range check; see read_into.
  void copy_row(std::uint64_t i, std::span<double> out) const noexcept {
    const std::byte* src = map_->data + kHeaderBytes + i * header_.row_bytes();
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), src, header_.row_bytes());
    } else {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = detail::load_double(src + j * 8);
    }
  }

  // Fills out (indices.size() x p, row-major) with the requested rows.
  void read_into(std::span<const std::uint64_t> indices, std::span<double> out) const {
    const std::size_t p = header_.cols;
    if (out.size() != indices.size() * p) throw ArgumentError("output buffer has wrong size");
    for (std::size_t m = 0; m < indices.size(); ++m) {
      if (indices[m] >= header_.rows) {
        throw RangeError("row index " + std::to_string(indices[m]) + " out of range [0, " +
                         std::to_string(header_.rows) + ")");
      }
      copy_row(indices[m], out.subspan(m * p, p));
    }
  }

 private:
  struct Mapping {
    const std::byte* data = nullptr;
    std::size_t size = 0;
    ~Mapping() {
      if (data != nullptr) ::munmap(const_cast<std::byte*>(data), size);
    }
  };

  friend DatasetHandle open_dataset(const std::filesystem::path& path);

  DatasetHeader header_;
  std::string path_;
  std::shared_ptr<const Mapping> map_;
};

inline DatasetHandle open_dataset(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw FormatError("cannot open '" + path.string() + "': " + std::strerror(errno));
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw FormatError("cannot stat '" + path.string() + "'");
  }
  const auto size = static_cast<std::uint64_t>(st.st_size);
  if (size < kHeaderBytes) {
    ::close(fd);
    throw FormatError("not an SJDS file (shorter than header): " + path.string());
  }
  void* p = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
  ::close(fd);
  if (p == MAP_FAILED) throw FormatError("mmap failed for '" + path.string() + "'");

  auto map = std::make_shared<DatasetHandle::Mapping>();
  map->data = static_cast<const std::byte*>(p);
  map->size = size;

  DatasetHandle h;
  h.header_ = decode_header({map->data, kHeaderBytes});
  if (h.header_.file_bytes() != size) {
    throw FormatError("length mismatch: header implies " + std::to_string(h.header_.file_bytes()) +
                      " bytes, file has " + std::to_string(size));
  }
  h.path_ = path.string();
  h.map_ = std::move(map);
  return h;
}

// Duplicate indices are allowed and yield duplicate rows.
inline RecordBatch read_records(const DatasetHandle& handle, std::span<const std::uint64_t> indices) {
  if (indices.empty()) throw ArgumentError("read_records needs at least one index");
  RecordBatch batch;
  batch.rows = RowMatrix(indices.size(), handle.cols());
  handle.read_into(indices, batch.rows.data());
  batch.source_indices.assign(indices.begin(), indices.end());
  return batch;
}

// sign(x) * log|x|, completed with 0 at x = 0.
inline double signed_log(double x) {
  if (!std::isfinite(x)) throw ArgumentError("signed_log: non-finite input");
  if (x == 0.0) return 0.0;
  return x > 0.0 ? std::log(x) : -std::log(-x);
}

enum class Transform { none, signed_log };

namespace detail {

// Splits one CSV record. Handles double-quoted fields with "" escapes; does
// not support newlines inside quotes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) { return s.empty() || s == "NA"; }

}  // namespace detail

// Ingests selected numeric columns of a CSV file (header row required) into
// an SJDS file. Rows with a missing value ("" or "NA") in any selected column
// are dropped; retained rows keep their order. An empty selection takes every
// column. Row numbers in diagnostics are 1-based data rows (header excluded).
inline DatasetHeader convert_csv(const std::filesystem::path& csv_path,
                                 const std::vector<std::string>& columns, Transform transform,
                                 const std::filesystem::path& out_path) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot read '" + csv_path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + csv_path.string() + "' has no header row");
  const auto names = detail::split_csv_line(line);

  std::vector<std::size_t> picked;
  if (columns.empty()) {
    for (std::size_t i = 0; i < names.size(); ++i) picked.push_back(i);
  } else {
    for (const auto& want : columns) {
      auto it = std::find_if(names.begin(), names.end(),
                             [&](const std::string& n) { return detail::trim(n) == want; });
      if (it == names.end()) throw FormatError("unknown column '" + want + "'");
      picked.push_back(static_cast<std::size_t>(it - names.begin()));
    }
  }

  DatasetWriter writer(out_path, static_cast<std::uint32_t>(picked.size()));
  std::vector<double> row(picked.size());
  std::uint64_t data_row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++data_row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != names.size()) {
      throw FormatError("row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(names.size()));
    }
    bool keep = true;
    for (std::size_t c = 0; c < picked.size(); ++c) {
      const auto text = detail::trim(fields[picked[c]]);
      if (detail::is_missing(text)) {
        keep = false;
        break;
      }
      double v = 0.0;
      const auto* first = text.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw FormatError("unparseable value at row " + std::to_string(data_row) + " (column '" +
                          std::string(detail::trim(names[picked[c]])) + "')");
      }
      if (!std::isfinite(v)) {
        throw FormatError("non-finite value at row " + std::to_string(data_row));
      }
      row[c] = transform == Transform::signed_log ? signed_log(v) : v;
    }
    if (keep) writer.append(row);
  }
  if (writer.rows() == 0) throw FormatError("no rows retained from '" + csv_path.string() + "'");
  return writer.finish();
}

}  // namespace sjds
