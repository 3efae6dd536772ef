#pragma once

// Binary archive for named parameter tensors. Values round-trip bit-exactly
// (doubles are stored as their IEEE-754 bit patterns, little-endian), so a
// reloaded model reproduces forward passes byte for byte.

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vgnet/common.hpp"
#include "vgnet/tensor.hpp"

namespace vgnet {

constexpr char kCkptMagic[8] = {'V', 'G', 'N', 'T', 'C', 'K', '1', '\n'};

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& named) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  detail::put_u64(out, named.size());
  for (const auto& [name, t] : named) {
    detail::put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u64(out, t.shape().size());
    for (std::size_t d : t.shape()) detail::put_u64(out, d);
    for (double v : t.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCkptMagic, 8))
    throw std::runtime_error("not a checkpoint file: " + path);
  std::size_t count = detail::get_u64(in);
  std::vector<std::pair<std::string, Tensor>> named;
  named.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t name_len = detail::get_u64(in);
    if (name_len > 4096) throw std::runtime_error("checkpoint name length implausible");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    std::size_t ndim = detail::get_u64(in);
    if (ndim > 16) throw std::runtime_error("checkpoint rank implausible");
    Shape shape(ndim);
    for (auto& d : shape) d = detail::get_u64(in);
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(detail::get_u64(in));
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    named.emplace_back(std::move(name), Tensor::from(shape, std::move(data)));
  }
  return named;
}

// Copies matching entries into an existing parameter set. Every destination
// tensor must be present in the archive with an identical shape.
inline void restore_into(std::vector<std::pair<std::string, Tensor>> dst,
                         const std::vector<std::pair<std::string, Tensor>>& src) {
  for (auto& [name, t] : dst) {
    const Tensor* found = nullptr;
    for (const auto& [sname, st] : src)
      if (sname == name) {
        found = &st;
        break;
      }
    if (!found) throw std::runtime_error("checkpoint missing tensor: " + name);
    if (found->shape() != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": have " +
                               shape_str(found->shape()) + ", want " + shape_str(t.shape()));
    t.raw() = found->values();
  }
}

}  // namespace vgnet
