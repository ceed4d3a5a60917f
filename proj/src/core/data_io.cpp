#include "data_io.hpp"

#include <bit>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "error.hpp"

namespace udm {

namespace {

constexpr int64_t kMaxPixels = int64_t{1} << 26;   // 64M pixels per image
constexpr uint64_t kMaxTensorBytes = uint64_t{1} << 32;  // 4 GiB per tensor

// Cursor over a byte buffer that reports failures with their offset.
class ByteReader {
 public:
  ByteReader(const std::vector<uint8_t>& bytes, std::string origin)
      : b_(bytes), origin_(std::move(origin)) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return b_.size() - pos_; }
  bool eof() const { return pos_ == b_.size(); }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(pos_, msg); }

  [[noreturn]] void fail_at(size_t at, const std::string& msg) const {
    throw IoError(origin_ + ": offset " + std::to_string(at) + ": " + msg);
  }

  uint8_t peek() const {
    if (pos_ >= b_.size()) fail("unexpected end of data");
    return b_[pos_];
  }

  uint8_t byte(const char* what) {
    if (pos_ >= b_.size()) fail(std::string("unexpected end of data reading ") + what);
    return b_[pos_++];
  }

  const uint8_t* raw(size_t n, const char* what) {
    if (remaining() < n) {
      fail(std::string("unexpected end of data reading ") + what + ": need " +
           std::to_string(n) + " bytes, have " + std::to_string(remaining()));
    }
    const uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

  uint32_t u32(const char* what) {
    const uint8_t* p = raw(4, what);
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
  }

  void expect_magic(const char* magic, const char* what) {
    const size_t at = pos_;
    const uint8_t* p = raw(4, what);
    for (int i = 0; i < 4; ++i) {
      if (p[i] != static_cast<uint8_t>(magic[i])) {
        pos_ = at;
        fail(std::string("bad magic, expected \"") + magic + "\"");
      }
    }
  }

 private:
  const std::vector<uint8_t>& b_;
  std::string origin_;
  size_t pos_ = 0;
};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  const uint64_t u = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
}

double get_f64(const uint8_t* p) {
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

void put_magic(std::vector<uint8_t>& out, const char* magic) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(magic[i]));
}

}  // namespace

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open for reading: " + path);
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  if (size < 0) {
    std::fclose(f);
    throw IoError("cannot determine size of: " + path);
  }
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  const size_t got = size ? std::fread(bytes.data(), 1, bytes.size(), f) : 0;
  std::fclose(f);
  if (got != bytes.size()) throw IoError("short read from: " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  const size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  const bool flushed = std::fclose(f) == 0;
  if (put != bytes.size() || !flushed) throw IoError("short write to: " + path);
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

std::vector<uint8_t> encode_pgm(const GrayImage& img) {
  if (img.h < 1 || img.w < 1 || img.numel() > kMaxPixels) {
    throw ShapeError("encode_pgm: bad image size " + std::to_string(img.h) + "x" +
                     std::to_string(img.w));
  }
  if (static_cast<int64_t>(img.pix.size()) != img.numel()) {
    throw ShapeError("encode_pgm: pixel buffer does not match extents");
  }
  const std::string header =
      "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pix.begin(), img.pix.end());
  return out;
}

namespace {

bool is_pgm_space(uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Skips whitespace runs and '#' comments between header tokens.
void skip_header_space(ByteReader& r) {
  for (;;) {
    if (r.eof()) r.fail("unexpected end of header");
    const uint8_t c = r.peek();
    if (is_pgm_space(c)) {
      r.byte("header");
    } else if (c == '#') {
      while (!r.eof() && r.peek() != '\n') r.byte("comment");
    } else {
      return;
    }
  }
}

int64_t header_int(ByteReader& r, const char* what) {
  skip_header_space(r);
  if (!std::isdigit(static_cast<int>(r.peek()))) {
    r.fail(std::string("expected integer for ") + what);
  }
  int64_t v = 0;
  while (!r.eof() && std::isdigit(static_cast<int>(r.peek()))) {
    v = v * 10 + (r.byte(what) - '0');
    if (v > kMaxPixels) r.fail(std::string(what) + " out of range");
  }
  return v;
}

}  // namespace

GrayImage decode_pgm(const std::vector<uint8_t>& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') r.fail("not a binary PGM (P5)");
  r.raw(2, "magic");

  const int64_t w = header_int(r, "width");
  const int64_t h = header_int(r, "height");
  const int64_t maxval = header_int(r, "maxval");
  if (w < 1 || h < 1 || h * w > kMaxPixels) r.fail("bad image dimensions");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (r.eof() || !is_pgm_space(r.peek())) r.fail("expected single whitespace after maxval");
  r.byte("separator");

  const size_t need = static_cast<size_t>(h * w);
  if (r.remaining() < need) {
    r.fail("payload truncated: expected " + std::to_string(need) + " bytes, found " +
           std::to_string(r.remaining()));
  }
  const uint8_t* p = r.raw(need, "pixels");
  if (!r.eof()) r.fail("trailing data after payload");

  GrayImage img;
  img.h = h;
  img.w = w;
  img.pix.assign(p, p + need);
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  write_file_bytes(path, encode_pgm(img));
}

GrayImage read_pgm(const std::string& path) {
  return decode_pgm(read_file_bytes(path), path);
}

// ---------------------------------------------------------------------------
// Tensor container
// ---------------------------------------------------------------------------

namespace {

void encode_tensor_header(std::vector<uint8_t>& out, uint32_t dtype, const Shape& shape,
                          size_t count) {
  if (shape_numel(shape) != static_cast<int64_t>(count)) {
    throw ShapeError("encode_tensor: " + std::to_string(count) + " elements for shape " +
                     shape_str(shape));
  }
  for (int64_t d : shape) {
    if (d < 1 || d > std::numeric_limits<uint32_t>::max()) {
      throw ShapeError("encode_tensor: extent out of range in " + shape_str(shape));
    }
  }
  put_magic(out, "UDT1");
  put_u32(out, dtype);
  put_u32(out, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) put_u32(out, static_cast<uint32_t>(d));
}

TensorBlob decode_tensor_from(ByteReader& r) {
  r.expect_magic("UDT1", "tensor magic");
  TensorBlob t;
  const size_t dtype_at = r.offset();
  t.dtype = r.u32("dtype");
  if (t.dtype != kDtypeF64 && t.dtype != kDtypeU8) {
    r.fail_at(dtype_at, "unknown dtype code " + std::to_string(t.dtype));
  }
  const uint32_t rank = r.u32("rank");
  if (rank > 8) r.fail("rank " + std::to_string(rank) + " too large");
  uint64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = r.u32("dim");
    if (d == 0) r.fail("zero extent");
    numel *= d;
    if (numel > kMaxTensorBytes) r.fail("tensor too large");
    t.shape.push_back(static_cast<int64_t>(d));
  }
  if (t.dtype == kDtypeF64) {
    if (numel * 8 > kMaxTensorBytes) r.fail("tensor too large");
    const uint8_t* p = r.raw(static_cast<size_t>(numel) * 8, "f64 payload");
    t.f64.resize(static_cast<size_t>(numel));
    for (size_t i = 0; i < t.f64.size(); ++i) t.f64[i] = get_f64(p + 8 * i);
  } else {
    const uint8_t* p = r.raw(static_cast<size_t>(numel), "u8 payload");
    t.u8.assign(p, p + numel);
  }
  return t;
}

}  // namespace

void encode_tensor_f64(std::vector<uint8_t>& out, const Shape& shape,
                       const std::vector<double>& data) {
  encode_tensor_header(out, kDtypeF64, shape, data.size());
  out.reserve(out.size() + 8 * data.size());
  for (double v : data) put_f64(out, v);
}

void encode_tensor_u8(std::vector<uint8_t>& out, const Shape& shape,
                      const std::vector<uint8_t>& data) {
  encode_tensor_header(out, kDtypeU8, shape, data.size());
  out.insert(out.end(), data.begin(), data.end());
}

TensorBlob decode_tensor(const std::vector<uint8_t>& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  TensorBlob t = decode_tensor_from(r);
  if (!r.eof()) r.fail("trailing data after tensor payload");
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& rec : records) {
    if (rec.name == name) return &rec;
  }
  return nullptr;
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.config_json.size() > std::numeric_limits<uint32_t>::max()) {
    throw ContractError("encode_checkpoint: config block too large");
  }
  for (size_t i = 0; i < ckpt.records.size(); ++i) {
    if (ckpt.records[i].name.empty()) {
      throw ContractError("encode_checkpoint: record " + std::to_string(i) + " has no name");
    }
    for (size_t j = i + 1; j < ckpt.records.size(); ++j) {
      if (ckpt.records[i].name == ckpt.records[j].name) {
        throw ContractError("encode_checkpoint: duplicate record name " + ckpt.records[i].name);
      }
    }
  }
  std::vector<uint8_t> out;
  put_magic(out, "UDC1");
  put_u32(out, static_cast<uint32_t>(ckpt.config_json.size()));
  out.insert(out.end(), ckpt.config_json.begin(), ckpt.config_json.end());
  put_u32(out, static_cast<uint32_t>(ckpt.records.size()));
  for (const auto& rec : ckpt.records) {
    put_u32(out, static_cast<uint32_t>(rec.name.size()));
    out.insert(out.end(), rec.name.begin(), rec.name.end());
    encode_tensor_f64(out, rec.shape, rec.data);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  r.expect_magic("UDC1", "checkpoint magic");
  Checkpoint ckpt;
  const uint32_t cfg_len = r.u32("config length");
  const uint8_t* cfg = r.raw(cfg_len, "config block");
  ckpt.config_json.assign(reinterpret_cast<const char*>(cfg), cfg_len);
  const uint32_t count = r.u32("record count");
  if (count > 1u << 20) r.fail("record count " + std::to_string(count) + " too large");
  ckpt.records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const uint32_t name_len = r.u32("name length");
    if (name_len == 0 || name_len > 4096) r.fail("bad record name length");
    const uint8_t* name = r.raw(name_len, "record name");
    rec.name.assign(reinterpret_cast<const char*>(name), name_len);
    TensorBlob t = decode_tensor_from(r);
    if (t.dtype != kDtypeF64) r.fail("record " + rec.name + " is not an f64 tensor");
    rec.shape = std::move(t.shape);
    rec.data = std::move(t.f64);
    ckpt.records.push_back(std::move(rec));
  }
  if (!r.eof()) r.fail("trailing data after records");
  for (size_t i = 0; i < ckpt.records.size(); ++i) {
    for (size_t j = i + 1; j < ckpt.records.size(); ++j) {
      if (ckpt.records[i].name == ckpt.records[j].name) {
        throw IoError(origin + ": duplicate record name " + ckpt.records[i].name);
      }
    }
  }
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path), path);
}

}  // namespace udm
