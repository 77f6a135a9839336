#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "mtur/tensor.hpp"

namespace mtur {

/// Named tensor stored in an MTTB container.
///
/// Layout (little-endian): "MTTB", u32 version = 1, u32 entry count, then per
/// entry: u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u8 ndim,
/// ndim x u64 dims, raw payload.
struct MttbEntry {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;
};

std::string encode_mttb(const std::vector<MttbEntry>& entries);
std::vector<MttbEntry> decode_mttb(std::string_view bytes);

void write_mttb(const std::filesystem::path& path, const std::vector<MttbEntry>& entries);
std::vector<MttbEntry> read_mttb(const std::filesystem::path& path);

/// Looks up `name`; throws IoError if absent.
const MttbEntry& find_entry(const std::vector<MttbEntry>& entries, std::string_view name);

}  // namespace mtur
