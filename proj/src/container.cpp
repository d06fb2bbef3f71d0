#include "spill/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spill/common.hpp"

static_assert(std::endian::native == std::endian::little, "ENVGRD01 I/O assumes a little-endian host");

namespace spill {

namespace {

constexpr char kMagic[8] = {'E', 'N', 'V', 'G', 'R', 'D', '0', '1'};

std::size_t dtype_width(const std::string& dtype, const std::string& var)
{
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw ValidationError("variable '" + var + "': unsupported dtype '" + dtype + "'");
}

} // namespace

std::size_t ContainerVariable::element_count() const
{
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const ContainerVariable& Container::variable(const std::string& name) const
{
  for (const auto& v : variables)
    if (v.name == name) return v;
  throw ValidationError("container has no variable '" + name + "'");
}

bool Container::has_variable(const std::string& name) const
{
  for (const auto& v : variables)
    if (v.name == name) return true;
  return false;
}

std::vector<std::uint8_t> encode_container(const Container& c)
{
  nlohmann::json header;
  header["grid"] = c.grid;
  header["meta"] = c.meta;
  header["variables"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& v : c.variables) {
    if (v.values.size() != v.element_count())
      throw ValidationError("variable '" + v.name + "': value count does not match shape");
    header["variables"].push_back(
        {{"name", v.name}, {"shape", v.shape}, {"dtype", v.dtype}, {"byte_offset", offset}});
    offset += v.values.size() * dtype_width(v.dtype, v.name);
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(12 + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());

  for (const auto& v : c.variables) {
    const std::size_t base = out.size();
    if (v.dtype == "f32") {
      out.resize(base + 4 * v.values.size());
      for (std::size_t i = 0; i < v.values.size(); ++i) {
        const float f = static_cast<float>(v.values[i]);
        std::memcpy(out.data() + base + 4 * i, &f, 4);
      }
    } else {
      out.resize(base + 8 * v.values.size());
      std::memcpy(out.data() + base, v.values.data(), 8 * v.values.size());
    }
  }
  return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& origin)
{
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw ValidationError(origin + ": missing ENVGRD01 magic");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (12 + static_cast<std::size_t>(len) > bytes.size())
    throw ValidationError(origin + ": header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": malformed header: " + e.what());
  }
  if (!header.is_object() || !header.contains("variables") || !header["variables"].is_array())
    throw ValidationError(origin + ": malformed header: 'variables' array missing");

  Container c;
  c.grid = header.value("grid", nlohmann::json::object());
  c.meta = header.value("meta", nlohmann::json::object());
  const std::size_t payload = 12 + len;

  for (const auto& jv : header["variables"]) {
    ContainerVariable v;
    try {
      v.name = jv.at("name").get<std::string>();
      v.shape = jv.at("shape").get<std::vector<std::size_t>>();
      v.dtype = jv.at("dtype").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(origin + ": malformed variable entry: " + e.what());
    }
    const auto offset = jv.value("byte_offset", std::size_t{0});
    const std::size_t width = dtype_width(v.dtype, v.name);
    const std::size_t count = v.element_count();
    if (payload + offset + count * width > bytes.size())
      throw ValidationError(origin + ": variable '" + v.name + "' extends past end of payload");
    const std::uint8_t* src = bytes.data() + payload + offset;
    v.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (width == 4) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        v.values[i] = f;
      } else {
        std::memcpy(&v.values[i], src + 8 * i, 8);
      }
      if (!std::isfinite(v.values[i]))
        throw ValidationError(origin + ": variable '" + v.name + "' contains non-finite values");
    }
    c.variables.push_back(std::move(v));
  }
  return c;
}

void write_container(const std::string& path, const Container& c)
{
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Container read_container(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path);
}

} // namespace spill
