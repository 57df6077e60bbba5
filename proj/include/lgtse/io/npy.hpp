#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lgtse/common/error.hpp"
#include "lgtse/common/tensor.hpp"

namespace lgtse {

// Minimal NPY (v1.0) writer/reader for float32/float64 tensors. This is the
// portable array container used by the guidance export subcommand.
namespace npy {

template <class T>
const char* dtype_str() {
  if constexpr (sizeof(T) == 4) return "<f4";
  else return "<f8";
}

template <class T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
  static_assert(std::is_floating_point_v<T>);
  std::ostringstream hdr;
  hdr << "{'descr': '" << dtype_str<T>() << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < t.rank(); ++i) hdr << t.dim(i) << (t.rank() == 1 ? "," : (i + 1 < t.rank() ? ", " : ""));
  hdr << "), }";
  std::string h = hdr.str();
  const std::size_t unpadded = 10 + h.size() + 1;
  const std::size_t pad = (64 - unpadded % 64) % 64;
  h.append(pad, ' ');
  h.push_back('\n');

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("npy save: cannot open " + path.string());
  const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  f.write(reinterpret_cast<const char*>(magic), 8);
  const std::uint16_t hlen = static_cast<std::uint16_t>(h.size());
  char lenb[2] = {char(hlen & 0xff), char(hlen >> 8)};
  f.write(lenb, 2);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!f) throw IoError("npy save: failed writing " + path.string());
}

template <class T>
Tensor<T> load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("npy load: cannot open " + path.string());
  unsigned char magic[8];
  f.read(reinterpret_cast<char*>(magic), 8);
  if (!f || magic[0] != 0x93 || std::memcmp(magic + 1, "NUMPY", 5) != 0)
    throw IoError("npy load: bad magic in " + path.string());
  unsigned char lenb[2];
  f.read(reinterpret_cast<char*>(lenb), 2);
  const std::size_t hlen = lenb[0] | (std::size_t(lenb[1]) << 8);
  std::string h(hlen, '\0');
  f.read(h.data(), static_cast<std::streamsize>(hlen));

  if (h.find(dtype_str<T>()) == std::string::npos)
    throw IoError("npy load: dtype mismatch in " + path.string());
  const std::size_t lp = h.find('(');
  const std::size_t rp = h.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos)
    throw IoError("npy load: malformed header in " + path.string());
  std::vector<std::size_t> shape;
  std::string dims = h.substr(lp + 1, rp - lp - 1);
  std::stringstream ss(dims);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_of("0123456789") == std::string::npos) continue;
    shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  Tensor<T> t(shape);
  f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!f) throw IoError("npy load: truncated data in " + path.string());
  return t;
}

}  // namespace npy
}  // namespace lgtse
