#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ime/tensor.hpp"

namespace ime::diff {

// Record layout: one text line "tensor <name> f64 <rank> <d0> ... <dk-1>\n"
// followed by the values as little-endian IEEE-754 doubles.

using NamedTensor = std::pair<std::string, Tensor>;

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t);
/// Throws CheckpointError on a malformed header or truncated payload.
NamedTensor read_tensor(std::istream& is);

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ime::diff
