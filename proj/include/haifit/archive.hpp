#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "haifit/tensor.hpp"

namespace haifit {

/// Versioned container of a JSON manifest plus named tensors.
///
/// Layout (all integers little-endian):
///   "HAIFITAR"                    8-byte magic
///   u32  format version (1)
///   u64  manifest byte length, then the manifest as compact JSON
///   u64  tensor count, then per tensor in name order:
///        u32 name length, name bytes,
///        u8 dtype (0 = f32, 1 = f64),
///        4 x i64 NCHW extents, raw element bytes.
///
/// Keys of the manifest object are emitted sorted, so identical content
/// always serializes to identical bytes.
class Archive {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

  struct Entry {
    Shape shape;
    DType dtype = DType::F32;
    std::vector<unsigned char> bytes;
  };

  nlohmann::json& manifest() { return manifest_; }
  const nlohmann::json& manifest() const { return manifest_; }

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& t) {
    static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
    Entry e;
    e.shape = t.shape();
    e.dtype = std::is_same_v<Scalar, float> ? DType::F32 : DType::F64;
    e.bytes.resize(sizeof(Scalar) * static_cast<std::size_t>(t.size()));
    if (t.size()) std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
    entries_[name] = std::move(e);
  }

  /// Reads a tensor, converting precision if the stored dtype differs.
  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name) const {
    const Entry& e = entry(name);
    Tensor<Scalar> out(e.shape);
    if (e.dtype == DType::F32) {
      Eigen::VectorXf v(e.shape.numel());
      if (v.size()) std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
      out.vec() = v.cast<Scalar>();
    } else {
      Eigen::VectorXd v(e.shape.numel());
      if (v.size()) std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
      out.vec() = v.cast<Scalar>();
    }
    return out;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string serialize() const;
  static Archive parse(std::string_view bytes);

  /// Writes to a temporary sibling then renames over `path`.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  nlohmann::json manifest_ = nlohmann::json::object();
  std::map<std::string, Entry> entries_;
};

std::string read_file(const std::filesystem::path& path);
/// Atomic replace via temp file + rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace haifit
