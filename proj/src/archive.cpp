#include "haifit/archive.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "haifit/error.hpp"

namespace haifit {

namespace {

constexpr std::string_view kMagic = "HAIFITAR";

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

template <typename T>
void put_int(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorKind::Format, "archive truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

const Archive::Entry& Archive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorKind::Format, "archive has no tensor '" + name + "'");
  return it->second;
}

std::string Archive::serialize() const {
  std::string out;
  out.append(kMagic);
  put_int<std::uint32_t>(out, kFormatVersion);
  const std::string manifest = manifest_.dump();
  put_int<std::uint64_t>(out, manifest.size());
  out.append(manifest);
  put_int<std::uint64_t>(out, entries_.size());
  for (const auto& [name, e] : entries_) {
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_int<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    for (Index d : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) put_int<std::int64_t>(out, d);
    out.append(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());
  }
  return out;
}

Archive Archive::parse(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw Error(ErrorKind::Format, "not a haifit archive");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorKind::Format, "unsupported archive version " + std::to_string(version));
  }
  Archive a;
  const auto manifest_len = r.get<std::uint64_t>();
  try {
    a.manifest_ = nlohmann::json::parse(r.take(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("bad archive manifest: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    Entry e;
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw Error(ErrorKind::Format, "unknown dtype in tensor '" + name + "'");
    e.dtype = static_cast<DType>(dtype);
    e.shape.n = r.get<std::int64_t>();
    e.shape.c = r.get<std::int64_t>();
    e.shape.h = r.get<std::int64_t>();
    e.shape.w = r.get<std::int64_t>();
    if (e.shape.n < 0 || e.shape.c < 0 || e.shape.h < 0 || e.shape.w < 0) {
      throw Error(ErrorKind::Format, "negative extent in tensor '" + name + "'");
    }
    const std::size_t elem = e.dtype == DType::F32 ? 4 : 8;
    auto raw = r.take(static_cast<std::size_t>(e.shape.numel()) * elem);
    e.bytes.assign(raw.begin(), raw.end());
    a.entries_.emplace(std::move(name), std::move(e));
  }
  if (!r.done()) throw Error(ErrorKind::Format, "trailing bytes after archive");
  return a;
}

void Archive::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Archive Archive::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Numerical, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

}  // namespace haifit
