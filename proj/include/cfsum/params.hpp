#pragma once

#include <string>
#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum {

// Named trainable parameters, in registration order. The order is what the
// checkpoint format and the optimizer iterate over.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Tensor> all() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t total_values() const;
  void zero_grad();

  // Flat binary checkpoint: magic "CFS1", u64 count, then per parameter
  // u32 name length, name bytes, u32 rank, u32 dims, little-endian f64s.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace cfsum
