#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace spill {

/// One named array in an ENVGRD01 container. Values are held as double in
/// memory; `dtype` decides the on-disk width ("f32" or "f64").
struct ContainerVariable
{
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype = "f32";
  std::vector<double> values;

  std::size_t element_count() const;
};

/// ENVGRD01 layout:
///   8 bytes  magic "ENVGRD01"
///   4 bytes  little-endian u32 header length
///   header   JSON {"grid": {...}, "meta": {...}, "variables": [{name, shape, dtype, byte_offset}]}
///   payload  little-endian arrays, C row-major, concatenated in header order
struct Container
{
  nlohmann::json grid = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ContainerVariable> variables;

  const ContainerVariable& variable(const std::string& name) const;
  bool has_variable(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& origin);

} // namespace spill
