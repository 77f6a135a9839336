#include "mtur/mttb.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mtur/error.hpp"

namespace mtur {
namespace {

constexpr char kMagic[4] = {'M', 'T', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t,
                                                      std::conditional_t<sizeof(U) == 2, std::uint16_t, std::uint8_t>>>;
  Bits b = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((b >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    using Bits = std::conditional_t<
        sizeof(U) == 8, std::uint64_t,
        std::conditional_t<sizeof(U) == 4, std::uint32_t, std::conditional_t<sizeof(U) == 2, std::uint16_t, std::uint8_t>>>;
    need(sizeof(U));
    Bits b = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      b |= static_cast<Bits>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<U>(b);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("MTTB: truncated container at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_tensor(std::string& out, const Tensor<T>& t) {
  put_le<std::uint8_t>(out, sizeof(T) == 4 ? 0 : 1);
  if (t.rank() > 255) throw IoError("MTTB: rank too large");
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (T v : t.data()) put_le<T>(out, v);
}

template <typename T>
Tensor<T> get_tensor(Reader& r, Shape shape) {
  const std::size_t n = shape_numel(shape);
  std::vector<T> data(n);
  for (auto& v : data) v = r.get<T>();
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

std::string encode_mttb(const std::vector<MttbEntry>& entries) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw IoError("MTTB: entry name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    std::visit([&](const auto& t) { put_tensor(out, t); }, e.tensor);
  }
  return out;
}

std::vector<MttbEntry> decode_mttb(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw IoError("MTTB: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("MTTB: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<MttbEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    MttbEntry e;
    const auto len = r.get<std::uint16_t>();
    e.name = std::string(r.take(len));
    const auto dtype = r.get<std::uint8_t>();
    const auto ndim = r.get<std::uint8_t>();
    if (ndim == 0) throw IoError("MTTB: entry '" + e.name + "' has rank 0");
    Shape shape(ndim);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (dtype == 0) {
      e.tensor = get_tensor<float>(r, std::move(shape));
    } else if (dtype == 1) {
      e.tensor = get_tensor<double>(r, std::move(shape));
    } else {
      throw IoError("MTTB: entry '" + e.name + "' has unknown dtype code " + std::to_string(dtype));
    }
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw IoError("MTTB: trailing bytes after last entry");
  return entries;
}

void write_mttb(const std::filesystem::path& path, const std::vector<MttbEntry>& entries) {
  const std::string bytes = encode_mttb(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<MttbEntry> read_mttb(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_mttb(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

const MttbEntry& find_entry(const std::vector<MttbEntry>& entries, std::string_view name) {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw IoError("MTTB: no entry named '" + std::string(name) + "'");
}

}  // namespace mtur
