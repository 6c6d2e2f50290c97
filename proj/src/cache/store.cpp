#include <algorithm>
#include <fstream>

#include "minihouse/cache/cache.hpp"
#include "minihouse/common/error.hpp"

namespace minihouse::cache {

namespace fs = std::filesystem;

void CacheConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  need(segment_bytes > 0 && region_bytes > 0 && chunk_bytes > 0 && block_bytes > 0, "cache unit sizes must be positive");
  need(block_bytes % chunk_bytes == 0, "block size must be a multiple of the chunk size");
  need(chunk_bytes % region_bytes == 0, "chunk size must be a multiple of the region size");
  need(region_bytes % segment_bytes == 0, "region size must be a multiple of the segment size");
  need(region_capacity > 0 && buffer_frames > 0 && node_chunk_capacity > 0, "cache capacities must be positive");
  need(nodes > 0 && vnodes > 0, "need at least one node and one virtual node");
}

std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  // splitmix finalizer spreads FNV's weak low bits
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

// ---------------------------------------------------------------- ring

void HashRing::add_node(std::uint32_t node) {
  for (std::size_t v = 0; v < vnodes_; ++v) {
    ring_.emplace(stable_hash("node-" + std::to_string(node) + "#" + std::to_string(v)), node);
  }
}

void HashRing::remove_node(std::uint32_t node) {
  for (auto it = ring_.begin(); it != ring_.end();) {
    it = it->second == node ? ring_.erase(it) : std::next(it);
  }
}

std::uint32_t HashRing::place(std::string_view key) const {
  if (ring_.empty()) fail(ErrorCode::EmptyRing, "no cache nodes on the ring");
  auto it = ring_.lower_bound(stable_hash(key));
  if (it == ring_.end()) it = ring_.begin();
  return it->second;
}

std::vector<std::uint32_t> HashRing::nodes() const {
  std::vector<std::uint32_t> out;
  for (const auto& [_, n] : ring_) out.push_back(n);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------- backend

Backend::Backend(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path Backend::resolve(const std::string& path) const {
  const fs::path p(path);
  if (path.empty() || p.is_absolute()) fail(ErrorCode::InvalidConfig, "backend paths must be relative: '" + path + "'");
  for (const auto& part : p) {
    if (part == "..") fail(ErrorCode::InvalidConfig, "backend path escapes the root: '" + path + "'");
  }
  return root_ / p;
}

bool Backend::exists(const std::string& path) const { return fs::is_regular_file(resolve(path)); }

std::uint64_t Backend::size(const std::string& path) const {
  std::error_code ec;
  const auto n = fs::file_size(resolve(path), ec);
  if (ec) fail(ErrorCode::NotFound, "backend has no file '" + path + "'");
  return n;
}

Bytes Backend::read(const std::string& path, std::uint64_t offset, std::uint64_t length) {
  const auto total = size(path);
  if (offset >= total) return {};
  length = std::min(length, total - offset);
  std::ifstream in(resolve(path), std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  Bytes out(length);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(length));
  if (static_cast<std::uint64_t>(in.gcount()) != length) fail(ErrorCode::IoError, "short read from '" + path + "'");
  ++reads_;
  bytes_read_ += length;
  return out;
}

void Backend::put(const std::string& path, ByteSpan bytes) {
  const auto p = resolve(path);
  fs::create_directories(p.parent_path());
  const auto tmp = p.parent_path() / ("." + p.filename().string() + ".put");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  }
  fs::rename(tmp, p);
}

void Backend::write_temp(const std::string& temp_name, ByteSpan bytes, bool append) {
  const auto p = resolve(temp_name);
  if (p.filename().string().front() != '.') fail(ErrorCode::InvalidConfig, "temp objects must be dot-prefixed");
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "cannot write temp object '" + temp_name + "'");
}

void Backend::concat(const std::vector<std::string>& temp_names, const std::string& path) {
  const auto final_path = resolve(path);
  fs::create_directories(final_path.parent_path());
  const auto staging = final_path.parent_path() / ("." + final_path.filename().string() + ".concat");
  {
    std::ofstream out(staging, std::ios::binary | std::ios::trunc);
    for (const auto& t : temp_names) {
      std::ifstream in(resolve(t), std::ios::binary);
      if (!in) fail(ErrorCode::IoError, "missing temp object '" + t + "'");
      out << in.rdbuf();
    }
    out.flush();
    if (!out) fail(ErrorCode::IoError, "concat into '" + path + "' failed");
  }
  fs::rename(staging, final_path);
  for (const auto& t : temp_names) fs::remove(resolve(t));
}

std::vector<std::string> Backend::temps() const {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root_)) {
    if (e.is_regular_file() && e.path().filename().string().front() == '.') {
      out.push_back(fs::relative(e.path(), root_).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Backend::remove_temps() {
  const auto t = temps();
  for (const auto& name : t) fs::remove(root_ / name);
  return t.size();
}

}  // namespace minihouse::cache
