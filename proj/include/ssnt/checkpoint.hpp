#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssnt/parameter.hpp"

namespace ssnt {

enum class ModelKind : std::uint32_t { ssnt = 1, lm = 2 };

std::string to_string(ModelKind kind);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers u32 little-endian):
//   "SSNT" | version | kind | record count
//   per parameter: name length | UTF-8 name | rank | dims... | f64 LE values
//   CRC32 of every preceding byte
std::vector<std::uint8_t> serialize_parameters(ModelKind kind, const ParameterSet& params);

// Overwrites the values of `params` in place. FormatError on a bad magic,
// version, kind, CRC, truncation, or a parameter list that does not match
// `params` by name and shape.
void deserialize_parameters(const std::vector<std::uint8_t>& bytes, ModelKind kind,
                            ParameterSet& params);

// Writes through a temporary file and a rename, so an existing checkpoint
// is never left half-written.
void save_checkpoint(const std::string& path, ModelKind kind, const ParameterSet& params);
void load_checkpoint(const std::string& path, ModelKind kind, ParameterSet& params);

// Raw file helpers (InputError when unreadable/unwritable).
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_atomically(const std::string& path, const std::string& contents);

}  // namespace ssnt
