#include "topseg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <vector>

#include "topseg/error.hpp"

namespace topseg::numkit {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'G', '1'};

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::string& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(byte()); }

  std::uint16_t u16() {
    std::uint16_t v = byte();
    v |= static_cast<std::uint16_t>(byte()) << 8;
    return v;
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string bytes(std::size_t n) {
    if (pos_ + n > data_.size()) fail();
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what = "truncated or malformed") {
    throw DataError("checkpoint " + path_ + ": " + what);
  }

 private:
  std::uint8_t byte() {
    if (pos_ >= data_.size()) fail();
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::string buf;
  buf.append(kMagic, 4);
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("checkpoint: too many tensors");
  }
  put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("checkpoint: tensor name too long: " + name);
    }
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.append(name);
    buf.push_back(2);  // rank
    put_u32(buf, static_cast<std::uint32_t>(t.rows()));
    put_u32(buf, static_cast<std::uint32_t>(t.cols()));
    for (double v : t.data()) put_f32(buf, static_cast<float>(v));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("checkpoint: write failed: " + path.string());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  Reader r(std::move(data), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic");
  const std::uint32_t count = r.u32();

  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    if (rank != 2) r.fail("tensor '" + name + "' has rank " + std::to_string(rank));
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Tensor t(rows, cols);
    for (double& v : t.data()) v = static_cast<double>(r.f32());
    if (!out.emplace(std::move(name), std::move(t)).second) {
      r.fail("duplicate tensor name");
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  return out;
}

}  // namespace topseg::numkit
