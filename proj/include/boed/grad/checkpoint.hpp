#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "boed/grad/tape.hpp"

namespace boed::grad {

// Versioned container of named tensors.
//
// Layout (all integers little-endian):
//   "BOEDCKPT"                      8-byte magic
//   u32 format_version, u64 seed
//   u32 n_meta, then n_meta x (str key, str value)
//   u32 n_tensors, then n_tensors x (str name, u32 rank, rank x u64 dim,
//                                    prod(dims) x f64 raw IEEE-754 bits)
// where str = u32 byte length followed by the bytes.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t);
  bool has(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Store / restore parameters as "<prefix><param name>".
void store_parameters(Checkpoint& ckpt, const std::string& prefix,
                      const std::vector<Parameter*>& params);
void restore_parameters(const Checkpoint& ckpt, const std::string& prefix,
                        const std::vector<Parameter*>& params);

}  // namespace boed::grad
