#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace udm {

// 8-bit grayscale image, row-major.
struct GrayImage {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> pix;

  int64_t numel() const { return h * w; }
};

// ---------------------------------------------------------------------------
// Raw file helpers. All failures throw IoError naming the path.
// ---------------------------------------------------------------------------
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255). The writer emits the canonical header
// "P5\n<w> <h>\n255\n"; the reader accepts any standards-conforming header
// (whitespace runs and '#' comments) and reports malformed input as IoError
// with the byte offset of the problem.
// ---------------------------------------------------------------------------
std::vector<uint8_t> encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::vector<uint8_t>& bytes, const std::string& origin);
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

// ---------------------------------------------------------------------------
// Binary tensor container. Layout, all integers little-endian u32:
//   magic "UDT1" | dtype (1 = f64, 2 = u8) | rank | dims[rank] | payload
// with the payload row-major little-endian and exactly product(dims) elements.
// ---------------------------------------------------------------------------
inline constexpr uint32_t kDtypeF64 = 1;
inline constexpr uint32_t kDtypeU8 = 2;

struct TensorBlob {
  uint32_t dtype = kDtypeF64;
  Shape shape;
  std::vector<double> f64;  // filled when dtype == kDtypeF64
  std::vector<uint8_t> u8;  // filled when dtype == kDtypeU8
};

void encode_tensor_f64(std::vector<uint8_t>& out, const Shape& shape,
                       const std::vector<double>& data);
void encode_tensor_u8(std::vector<uint8_t>& out, const Shape& shape,
                      const std::vector<uint8_t>& data);
TensorBlob decode_tensor(const std::vector<uint8_t>& bytes, const std::string& origin);

// ---------------------------------------------------------------------------
// Checkpoint container: a JSON config text block plus named f64 tensors.
// Layout: magic "UDC1" | u32 config length | config bytes | u32 record count |
// records, each u32 name length | name bytes | embedded tensor blob as above.
// Record order is preserved; names must be unique.
// ---------------------------------------------------------------------------
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::string config_json;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace udm
