#include "cfsum/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfsum {

namespace {

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::invalid_argument("ParamStore: unknown name " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

std::vector<Tensor> ParamStore::all() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("CFS1", 4);
  write_pod<std::uint64_t>(os, entries_.size());
  for (const auto& [name, t] : entries_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) write_pod<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CFS1", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto count = read_pod<std::uint64_t>(is);
  if (count != entries_.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (" +
                             std::to_string(count) + " in file, " +
                             std::to_string(entries_.size()) + " expected)");
  for (auto& [name, t] : entries_) {
    const auto len = read_pod<std::uint32_t>(is);
    std::string fname(len, '\0');
    is.read(fname.data(), len);
    if (fname != name)
      throw std::runtime_error("checkpoint: parameter order mismatch, got " + fname +
                               " expected " + name);
    const auto rank = read_pod<std::uint32_t>(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(is));
    if (shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (auto& v : t.data()) v = read_pod<double>(is);
  }
}

}  // namespace cfsum
