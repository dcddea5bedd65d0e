#pragma once

// Flat binary parameter container. Layout:
//   magic "EFK1"
//   per parameter: u32 name length, UTF-8 name, u32 rank, u32 dims...,
//                  raw little-endian f32 data
// Parameters are stored until end of file.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cardiac/errors.hpp"
#include "cardiac/params.hpp"

namespace cardiac {

struct CheckpointEntry {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

template <class T>
void save_checkpoint(const std::string& path, const ParamMap<T>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
  f.write("EFK1", 4);
  for (const auto& [name, t] : params.items) {
    uint32_t len = static_cast<uint32_t>(name.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(name.data(), len);
    uint32_t rank = static_cast<uint32_t>(t.dims().size());
    f.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t.dims()) {
      uint32_t u = static_cast<uint32_t>(d);
      f.write(reinterpret_cast<const char*>(&u), 4);
    }
    for (size_t i = 0; i < t.size(); ++i) {
      float v = static_cast<float>(t.data()[i]);
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  if (!f) throw FormatError("write failure on checkpoint: " + path);
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "EFK1", 4) != 0)
    throw FormatError("bad checkpoint magic at byte 0 in " + path);
  std::vector<CheckpointEntry> out;
  auto offset = [&]() { return static_cast<long>(f.tellg()); };
  while (true) {
    uint32_t len = 0;
    if (!f.read(reinterpret_cast<char*>(&len), 4)) break;  // clean EOF
    CheckpointEntry e;
    e.name.resize(len);
    long at = offset();
    if (!f.read(e.name.data(), len))
      throw FormatError("truncated name at byte " + std::to_string(at) + " in " + path);
    uint32_t rank = 0;
    at = offset();
    if (!f.read(reinterpret_cast<char*>(&rank), 4))
      throw FormatError("truncated rank at byte " + std::to_string(at) + " in " + path);
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t d = 0;
      at = offset();
      if (!f.read(reinterpret_cast<char*>(&d), 4) || d == 0)
        throw FormatError("bad extent at byte " + std::to_string(at) + " in " + path);
      e.dims.push_back(static_cast<int>(d));
      count *= d;
    }
    e.data.resize(count);
    at = offset();
    if (!f.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(count * 4)))
      throw FormatError("truncated data at byte " + std::to_string(at) + " in " + path);
    out.push_back(std::move(e));
  }
  return out;
}

// Copies checkpoint values into an existing parameter map; names and shapes
// must match exactly.
template <class T>
void load_into(const std::string& path, ParamMap<T>& params) {
  auto entries = load_checkpoint(path);
  if (entries.size() != params.items.size())
    throw FormatError("checkpoint parameter count mismatch in " + path);
  for (const auto& e : entries) {
    Tensor<T>* t = params.find(e.name);
    if (!t) throw FormatError("checkpoint has unknown parameter: " + e.name);
    if (t->dims() != e.dims) throw FormatError("shape mismatch for parameter: " + e.name);
    for (size_t i = 0; i < e.data.size(); ++i) t->data()[i] = static_cast<T>(e.data[i]);
  }
}

}  // namespace cardiac
