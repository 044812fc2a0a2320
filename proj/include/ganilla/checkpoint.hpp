#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ganilla/tensor.hpp"

namespace ganilla {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned binary container: string metadata plus named typed arrays.
///
/// Layout (host byte order, little-endian on supported targets):
///   "GANILLA\0" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_arrays | n_arrays x (str name, u8 dtype, u32 rank, u64 dims[rank], raw data)
/// where str = u32 length + bytes and dtype 4 = float32, 8 = float64.
class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    Entry e{sizeof(T), t.shape(), std::vector<char>(t.size() * sizeof(T))};
    std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
    if (!arrays_.count(name)) order_.push_back(name);
    arrays_[name] = std::move(e);
  }

  bool has(const std::string& name) const { return arrays_.count(name) > 0; }

  /// Array `name` as T (converted when stored in the other precision).
  template <typename T>
  Tensor<T> get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw CheckpointError("checkpoint has no array '" + name + "'");
    const Entry& e = it->second;
    const std::size_t n = shape_size(e.shape);
    if (e.dtype == sizeof(T)) {
      std::vector<T> data(n);
      std::memcpy(data.data(), e.bytes.data(), n * sizeof(T));
      return Tensor<T>(e.shape, std::move(data));
    }
    if (e.dtype == 4) return get_as<float>(e).template cast<T>();
    return get_as<double>(e).template cast<T>();
  }

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint has no metadata '" + key + "'");
    return it->second;
  }

  const std::vector<std::string>& array_names() const { return order_; }

  void save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw CheckpointError("cannot write " + tmp.string());
      out.write("GANILLA", 8);
      write_u32(out, kVersion);
      write_u32(out, static_cast<std::uint32_t>(meta.size()));
      for (const auto& [k, v] : meta) {
        write_str(out, k);
        write_str(out, v);
      }
      write_u32(out, static_cast<std::uint32_t>(order_.size()));
      for (const auto& name : order_) {
        const Entry& e = arrays_.at(name);
        write_str(out, name);
        out.put(static_cast<char>(e.dtype));
        write_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) {
          const std::uint64_t v = d;
          out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
        out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
      }
      if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static Archive load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8] = {};
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "GANILLA", 8) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
      throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Archive a;
    for (std::uint32_t i = read_u32(in); i > 0; --i) {
      std::string k = read_str(in);
      a.meta[k] = read_str(in);
    }
    for (std::uint32_t i = read_u32(in); i > 0; --i) {
      std::string name = read_str(in);
      Entry e;
      e.dtype = static_cast<std::uint8_t>(in.get());
      if (e.dtype != 4 && e.dtype != 8) throw CheckpointError(path.string() + ": bad dtype for " + name);
      const std::uint32_t rank = read_u32(in);
      if (rank > 8) throw CheckpointError(path.string() + ": bad rank for " + name);
      for (std::uint32_t r = 0; r < rank; ++r) {
        std::uint64_t d = 0;
        in.read(reinterpret_cast<char*>(&d), sizeof d);
        e.shape.push_back(static_cast<std::size_t>(d));
      }
      e.bytes.resize(shape_size(e.shape) * e.dtype);
      in.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
      if (!in) throw CheckpointError(path.string() + ": truncated array " + name);
      a.order_.push_back(name);
      a.arrays_[name] = std::move(e);
    }
    return a;
  }

 private:
  struct Entry {
    std::uint8_t dtype = 4;
    Shape shape;
    std::vector<char> bytes;
  };

  template <typename U>
  static Tensor<U> get_as(const Entry& e) {
    std::vector<U> data(shape_size(e.shape));
    std::memcpy(data.data(), e.bytes.data(), data.size() * sizeof(U));
    return Tensor<U>(e.shape, std::move(data));
  }

  static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  static void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw CheckpointError("truncated checkpoint");
    return v;
  }
  static std::string read_str(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    if (n > (1u << 26)) throw CheckpointError("corrupt checkpoint string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw CheckpointError("truncated checkpoint");
    return s;
  }

  std::map<std::string, Entry> arrays_;
  std::vector<std::string> order_;
};

}  // namespace ganilla
