#include "ime/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ime/error.hpp"

namespace ime::diff {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw CheckpointError("tensor name must be non-empty without whitespace: '" + name + "'");
  }
  os << "tensor " << name << " f64 " << t.rank();
  for (auto d : t.shape()) os << ' ' << d;
  os << '\n';
  for (double v : t.values()) {
    const auto bits = to_little(std::bit_cast<std::uint64_t>(v));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    os.write(buf, 8);
  }
}

NamedTensor read_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw CheckpointError("truncated file: missing tensor header");
  std::istringstream hs(line);
  std::string tag, name, dtype;
  std::size_t rank = 0;
  if (!(hs >> tag >> name >> dtype >> rank) || tag != "tensor") {
    throw CheckpointError("malformed tensor header: '" + line + "'");
  }
  if (dtype != "f64") throw CheckpointError("unsupported dtype '" + dtype + "' for " + name);
  Shape shape(rank);
  for (auto& d : shape) {
    if (!(hs >> d)) throw CheckpointError("malformed shape in header: '" + line + "'");
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    char buf[8];
    if (!is.read(buf, 8)) throw CheckpointError("truncated payload for tensor " + name);
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf, 8);
    t[i] = std::bit_cast<double>(to_little(bits));
  }
  return {name, std::move(t)};
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  for (const auto& [name, t] : tensors) write_tensor(os, name, t);
  write_file_atomic(path, os.str());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ime::diff
