#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mof/tensor.hpp"

namespace mof::io {

// Little-endian wire primitives. Read errors name the stream offset where
// the data ran out or went bad.

void write_u8(std::ostream& os, uint8_t v);
void write_u16(std::ostream& os, uint16_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_i64(std::ostream& os, int64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_str(std::ostream& os, const std::string& s);  // u32 length + bytes

uint8_t read_u8(std::istream& is);
uint16_t read_u16(std::istream& is);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
int64_t read_i64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
std::string read_str(std::istream& is, uint32_t max_len = 1u << 20);

/// Reads `magic` (8 bytes) or throws an IoError naming the offset of the
/// first mismatching byte.
void expect_magic(std::istream& is, const char magic[8]);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Record layout: name (u32 length + bytes), rank u32, extents u64 each,
/// precision tag u8 (0 = f32, 1 = f64), raw little-endian values.
void write_tensor_record(std::ostream& os, const NamedTensor& rec);
NamedTensor read_tensor_record(std::istream& is);

/// Container: 8-byte magic, u32 record count, records.
void write_records_file(const std::string& path, const char magic[8],
                        const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_records_file(const std::string& path, const char magic[8]);

/// The named tensor with that exact name, or IoError.
const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name);

}  // namespace mof::io
