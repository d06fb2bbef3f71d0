#include "spill/common.hpp"

#include <cstdio>
#include <fstream>

namespace spill {

namespace {

std::uint64_t fnv1a_update(std::uint64_t h, const unsigned char* p, std::size_t n)
{
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t h)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace

std::string fnv1a_hex(const void* data, std::size_t size)
{
  return to_hex(fnv1a_update(0xCBF29CE484222325ull, static_cast<const unsigned char*>(data), size));
}

std::string file_checksum(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(buf), static_cast<std::size_t>(in.gcount()));
  }
  return to_hex(h);
}

} // namespace spill
