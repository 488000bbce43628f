#include "mof/serialize.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace mof::io {

namespace {

void put_bytes(std::ostream& os, const unsigned char* b, size_t n) {
  os.write(reinterpret_cast<const char*>(b), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

void get_bytes(std::istream& is, unsigned char* b, size_t n, const char* what) {
  std::streampos at = is.tellg();
  is.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw IoError(std::string("truncated ") + what + " at offset " +
                  std::to_string(static_cast<long long>(at)));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  unsigned char b[sizeof(T)];
  get_bytes(is, b, sizeof(T), what);
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& os, uint8_t v) { write_le<uint8_t>(os, v); }
void write_u16(std::ostream& os, uint16_t v) { write_le<uint16_t>(os, v); }
void write_u32(std::ostream& os, uint32_t v) { write_le<uint32_t>(os, v); }
void write_u64(std::ostream& os, uint64_t v) { write_le<uint64_t>(os, v); }
void write_i64(std::ostream& os, int64_t v) { write_le<uint64_t>(os, static_cast<uint64_t>(v)); }
void write_f32(std::ostream& os, float v) { write_le<uint32_t>(os, std::bit_cast<uint32_t>(v)); }
void write_f64(std::ostream& os, double v) { write_le<uint64_t>(os, std::bit_cast<uint64_t>(v)); }

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  if (!s.empty())
    put_bytes(os, reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

uint8_t read_u8(std::istream& is) { return read_le<uint8_t>(is, "u8"); }
uint16_t read_u16(std::istream& is) { return read_le<uint16_t>(is, "u16"); }
uint32_t read_u32(std::istream& is) { return read_le<uint32_t>(is, "u32"); }
uint64_t read_u64(std::istream& is) { return read_le<uint64_t>(is, "u64"); }
int64_t read_i64(std::istream& is) { return static_cast<int64_t>(read_le<uint64_t>(is, "i64")); }
float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<uint32_t>(is, "f32")); }
double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<uint64_t>(is, "f64")); }

std::string read_str(std::istream& is, uint32_t max_len) {
  std::streampos at = is.tellg();
  uint32_t n = read_u32(is);
  if (n > max_len)
    throw IoError("string length " + std::to_string(n) + " at offset " +
                  std::to_string(static_cast<long long>(at)) + " exceeds limit");
  std::string s(n, '\0');
  if (n) get_bytes(is, reinterpret_cast<unsigned char*>(s.data()), n, "string body");
  return s;
}

void expect_magic(std::istream& is, const char magic[8]) {
  for (int i = 0; i < 8; ++i) {
    std::streampos at = is.tellg();
    unsigned char b;
    get_bytes(is, &b, 1, "magic");
    if (b != static_cast<unsigned char>(magic[i]))
      throw IoError("bad magic byte at offset " + std::to_string(static_cast<long long>(at)) +
                    ": expected '" + std::string(1, magic[i]) + "'");
  }
}

void write_tensor_record(std::ostream& os, const NamedTensor& rec) {
  const Tensor& t = rec.tensor;
  if (!t.defined()) throw IoError("cannot serialize undefined tensor '" + rec.name + "'");
  write_str(os, rec.name);
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t e : t.shape()) write_u64(os, static_cast<uint64_t>(e));
  write_u8(os, t.prec() == Prec::f32 ? 0 : 1);
  if (t.prec() == Prec::f32) {
    for (float v : t.data<float>()) write_f32(os, v);
  } else {
    for (double v : t.data<double>()) write_f64(os, v);
  }
}

NamedTensor read_tensor_record(std::istream& is) {
  NamedTensor rec;
  rec.name = read_str(is);
  uint32_t rank = read_u32(is);
  if (rank > 8) throw IoError("tensor '" + rec.name + "': implausible rank " +
                              std::to_string(rank));
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
  uint8_t tag = read_u8(is);
  if (tag > 1) throw IoError("tensor '" + rec.name + "': bad precision tag " +
                             std::to_string(tag));
  Prec p = tag == 0 ? Prec::f32 : Prec::f64;
  Tensor t = Tensor::zeros(shape, p);
  if (p == Prec::f32) {
    auto d = t.data<float>();
    for (size_t i = 0; i < d.size(); ++i) d[i] = read_f32(is);
  } else {
    auto d = t.data<double>();
    for (size_t i = 0; i < d.size(); ++i) d[i] = read_f64(is);
  }
  rec.tensor = t;
  return rec;
}

void write_records_file(const std::string& path, const char magic[8],
                        const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  put_bytes(os, reinterpret_cast<const unsigned char*>(magic), 8);
  write_u32(os, static_cast<uint32_t>(records.size()));
  for (const NamedTensor& r : records) write_tensor_record(os, r);
  os.flush();
  if (!os) throw IoError("write failed for '" + path + "'");
}

std::vector<NamedTensor> read_records_file(const std::string& path, const char magic[8]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    expect_magic(is, magic);
    uint32_t count = read_u32(is);
    std::vector<NamedTensor> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) records.push_back(read_tensor_record(is));
    return records;
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " in '" + path + "'");
  }
}

const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name) {
  for (const NamedTensor& r : records)
    if (r.name == name) return r.tensor;
  throw IoError("record '" + name + "' not found");
}

}  // namespace mof::io
