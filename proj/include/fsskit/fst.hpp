#pragma once

#include <filesystem>
#include <variant>

#include "fsskit/tensor.hpp"

// FST binary tensor format, shared repo-wide:
//   magic "FST1" | u8 dtype (0 = real32, 1 = uint8 mask) | u8 rank
//   | rank x little-endian u32 extents | payload, row-major, little-endian.
// Readers reject bad magic, dtype, or truncated payloads with errors that
// carry the offending byte offset.

namespace fsskit {

void write_fst(const std::filesystem::path& path, const Tensor& t);
void write_fst(const std::filesystem::path& path, const BinaryMask& m);

Tensor read_fst_tensor(const std::filesystem::path& path);
BinaryMask read_fst_mask(const std::filesystem::path& path);

// For tooling that does not know the dtype up front.
std::variant<Tensor, BinaryMask> read_fst(const std::filesystem::path& path);

}  // namespace fsskit
