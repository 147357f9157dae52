// SPDX-License-Identifier: Apache-2.0
#include <s24/matrix_io.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace s24 {
namespace {

constexpr std::uint8_t kDenseMagic[4] = {'S', '2', '4', 'M'};
constexpr std::uint8_t kSparseMagic[4] = {'S', '2', '4', 'C'};

class Writer {
public:
  void bytes(const std::uint8_t *p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return in_.size() - pos_; }

  void need(std::uint64_t n, const char *what) const {
    if (remaining() < n)
      throw FormatError(std::string("truncated ") + what, pos_);
  }
  void magic(const std::uint8_t (&expected)[4]) {
    need(4, "magic");
    if (std::memcmp(in_.data(), expected, 4) != 0)
      throw FormatError("bad magic", 0);
    pos_ += 4;
  }
  std::uint8_t u8(const char *what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint64_t at = pos_;
    const float v = std::bit_cast<float>(u32("payload"));
    if (!std::isfinite(v))
      throw FormatError("non-finite value in payload", at);
    return v;
  }
  void version() {
    const std::uint64_t at = pos_;
    if (u32("version") != kFormatVersion)
      throw FormatError("unsupported format version", at);
  }
  void finish() const {
    if (remaining() != 0)
      throw FormatError("trailing bytes after payload", pos_);
  }

private:
  std::span<const std::uint8_t> in_;
  std::uint64_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char *what) {
  if (v > UINT32_MAX)
    throw DimensionError(std::string(what) + " does not fit the u32 header field");
  return static_cast<std::uint32_t>(v);
}

// Byte count of `count` f32 values, or throws if it overflows 64 bits.
std::uint64_t payload_bytes(std::uint64_t count_a, std::uint64_t count_b,
                            std::uint64_t header_offset) {
  if (count_a != 0 && count_b > UINT64_MAX / 4 / count_a)
    throw FormatError("size overflow", header_offset);
  return count_a * count_b * 4;
}

} // namespace

std::vector<std::uint8_t> encode_matrix(const DenseMatrix &a) {
  Writer w;
  w.bytes(kDenseMagic, 4);
  w.u32(kFormatVersion);
  w.u32(checked_u32(a.rows(), "rows"));
  w.u32(checked_u32(a.cols(), "cols"));
  for (float v : a.data())
    w.f32(v);
  return w.take();
}

DenseMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kDenseMagic);
  r.version();
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  const std::uint64_t need = payload_bytes(rows, cols, 8);
  if (r.remaining() < need)
    throw FormatError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(r.remaining()),
                      r.offset());
  std::vector<float> data(static_cast<std::size_t>(rows) * cols);
  for (auto &v : data)
    v = r.f32();
  r.finish();
  return DenseMatrix::from(rows, cols, std::move(data));
}

std::vector<std::uint8_t> encode_sparse(const Sparse24Matrix<float> &s) {
  Writer w;
  w.bytes(kSparseMagic, 4);
  w.u32(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(s.orientation()));
  w.u32(checked_u32(s.rows(), "rows"));
  w.u32(checked_u32(s.cols(), "cols"));
  for (float v : s.values())
    w.f32(v);
  auto meta = s.meta();
  w.bytes(meta.data(), meta.size());
  return w.take();
}

Sparse24Matrix<float> decode_sparse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kSparseMagic);
  r.version();
  const std::uint64_t orient_at = r.offset();
  const std::uint8_t orient = r.u8("orientation");
  if (orient > 1)
    throw FormatError("unknown orientation " + std::to_string(orient), orient_at);
  const auto o = static_cast<Orientation>(orient);
  const std::uint64_t shape_at = r.offset();
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  if ((o == Orientation::token_wise && cols % 4 != 0) ||
      (o == Orientation::feature_wise && rows % 4 != 0))
    throw FormatError("shape not divisible by 4 along the group axis", shape_at);
  const std::uint64_t groups = o == Orientation::token_wise
                                   ? static_cast<std::uint64_t>(rows) * (cols / 4)
                                   : static_cast<std::uint64_t>(cols) * (rows / 4);
  const std::uint64_t value_bytes = payload_bytes(groups, 2, shape_at);
  const std::uint64_t meta_bytes = (groups + 1) / 2;
  if (r.remaining() < value_bytes + meta_bytes)
    throw FormatError("truncated payload", r.offset());
  std::vector<float> values(static_cast<std::size_t>(2 * groups));
  for (auto &v : values)
    v = r.f32();
  std::vector<std::uint8_t> meta(static_cast<std::size_t>(meta_bytes));
  for (std::size_t g = 0; g < groups; ++g) {
    const std::uint64_t at = r.offset();
    if (g % 2 == 0)
      meta[g / 2] = r.u8("metadata");
    const unsigned nib = (meta[g / 2] >> ((g % 2) * 4)) & 0xF;
    if ((nib & 0x3) >= ((nib >> 2) & 0x3))
      throw FormatError("metadata positions not strictly increasing in group " +
                            std::to_string(g),
                        g % 2 == 0 ? at : at - 1);
  }
  if (groups % 2 == 1 && (meta.back() >> 4) != 0)
    throw FormatError("nonzero padding nibble in metadata", r.offset() - 1);
  r.finish();
  return Sparse24Matrix<float>(rows, cols, o, std::move(values), std::move(meta));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw DataError("write failed: " + path.string());
}

void write_matrix(const std::filesystem::path &path, const DenseMatrix &a) {
  write_file_bytes(path, encode_matrix(a));
}

DenseMatrix read_matrix(const std::filesystem::path &path) {
  return decode_matrix(read_file_bytes(path));
}

void write_sparse(const std::filesystem::path &path, const Sparse24Matrix<float> &s) {
  write_file_bytes(path, encode_sparse(s));
}

Sparse24Matrix<float> read_sparse(const std::filesystem::path &path) {
  return decode_sparse(read_file_bytes(path));
}

FileKind sniff_kind(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kDenseMagic, 4) == 0)
    return FileKind::dense;
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kSparseMagic, 4) == 0)
    return FileKind::sparse;
  return FileKind::unknown;
}

} // namespace s24
