#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "minihouse/common/bytes.hpp"

// Two cache tiers over a directory-backed store: a shared chunk cache spread over simulated
// nodes by consistent hashing, and a compute-side cache of FIFO regions plus a clock buffer pool.
namespace minihouse::cache {

inline constexpr std::uint64_t kMiB = 1024 * 1024;

struct CacheConfig {
  std::uint64_t block_bytes = 12 * kMiB;
  std::uint64_t chunk_bytes = 4 * kMiB;
  std::uint64_t region_bytes = 1 * kMiB;
  std::uint64_t segment_bytes = 128 * 1024;
  std::size_t region_capacity = 64;     // regions held compute-side
  std::size_t buffer_frames = 256;      // segment-sized frames
  std::size_t nodes = 10;
  std::size_t vnodes = 64;
  std::size_t node_chunk_capacity = 16;  // chunks per node

  // InvalidConfig unless chunk | block, region | chunk and segment | region.
  void validate() const;
  std::uint64_t segments_per_region() const { return region_bytes / segment_bytes; }
};

std::uint64_t stable_hash(std::string_view s) noexcept;

// ---------------------------------------------------------------- consistent hashing

class HashRing {
 public:
  explicit HashRing(std::size_t vnodes = 64) : vnodes_(vnodes) {}

  void add_node(std::uint32_t node);
  void remove_node(std::uint32_t node);
  std::uint32_t place(std::string_view key) const;  // EmptyRing when no nodes
  std::vector<std::uint32_t> nodes() const;
  bool empty() const noexcept { return ring_.empty(); }

 private:
  std::size_t vnodes_;
  std::map<std::uint64_t, std::uint32_t> ring_;
};

// ---------------------------------------------------------------- backend store

// Files under a root directory. Names starting with '.' are temporary objects.
class Backend {
 public:
  explicit Backend(std::filesystem::path root);

  Bytes read(const std::string& path, std::uint64_t offset, std::uint64_t length);  // clipped at EOF
  std::uint64_t size(const std::string& path) const;                                 // NotFound
  bool exists(const std::string& path) const;
  void put(const std::string& path, ByteSpan bytes);  // atomic replace

  void write_temp(const std::string& temp_name, ByteSpan bytes, bool append);
  // Appends the temps in order into one hidden object, renames it to `path`, deletes the temps.
  void concat(const std::vector<std::string>& temp_names, const std::string& path);
  std::vector<std::string> temps() const;
  std::size_t remove_temps();

  const std::filesystem::path& root() const noexcept { return root_; }
  std::uint64_t reads() const noexcept { return reads_; }
  std::uint64_t bytes_read() const noexcept { return bytes_read_; }

 private:
  std::filesystem::path resolve(const std::string& path) const;

  std::filesystem::path root_;
  std::uint64_t reads_ = 0;
  std::uint64_t bytes_read_ = 0;
};

// ---------------------------------------------------------------- compute-side units

struct SegmentKey {
  std::string path;
  std::uint64_t index = 0;  // offset / segment_bytes
  auto operator<=>(const SegmentKey&) const = default;
};

std::string format_segment(const SegmentKey& k);

// Segment-sized frames replaced by a second-chance clock.
class BufferPool {
 public:
  explicit BufferPool(std::size_t frames) : capacity_(frames) {}

  // Sets the reference bit on a hit.
  const Bytes* lookup(const SegmentKey& key);
  bool contains(const SegmentKey& key) const { return index_.count(key) > 0; }
  // Loads a frame with its reference bit set, evicting first when full. Returns the victim.
  std::optional<SegmentKey> insert(const SegmentKey& key, Bytes bytes);
  void pin(const SegmentKey& key);    // NotFound when absent
  void unpin(const SegmentKey& key);
  bool referenced(const SegmentKey& key) const;
  // One clock sweep step sequence: clears set bits in passing, skips pinned frames, returns the
  // first unpinned frame with a clear bit. AllPinned when every frame is pinned.
  SegmentKey evict_one();
  void drop_path(const std::string& path);

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  struct Frame {
    SegmentKey key;
    Bytes bytes;
    bool ref = false;
    std::uint32_t pins = 0;
    bool used = false;
  };
  std::size_t capacity_;
  std::vector<Frame> frames_;
  std::map<SegmentKey, std::size_t> index_;
  std::size_t hand_ = 0;
};

// A 1 MB-aligned slice of one file holding the segments fetched so far.
struct Region {
  std::string path;
  std::uint64_t index = 0;  // offset / region_bytes
  std::uint64_t admitted = 0;
  std::map<std::uint64_t, Bytes> segments;  // segment index -> bytes
};

// Two-level map: path hash -> region-index bucket -> region.
class MetaIndex {
 public:
  Region* find(const std::string& path, std::uint64_t region) const;
  void put(Region* r);
  void erase(const std::string& path, std::uint64_t region);
  std::size_t size() const noexcept { return count_; }

  // Inactive entries: (path, region index, admission, segment indexes), without payloads.
  nlohmann::json serialize() const;
  static std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t, std::vector<std::uint64_t>>> entries(
      const nlohmann::json& j);

 private:
  std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, std::vector<Region*>>> buckets_;
  std::size_t count_ = 0;
};

class RegionStore {
 public:
  RegionStore(std::size_t capacity, std::uint64_t region_bytes) : capacity_(capacity), region_bytes_(region_bytes) {}

  Region* find(const std::string& path, std::uint64_t region) const { return meta_.find(path, region); }
  // Returns the region, creating it at the FIFO tail (evicting the head when full).
  Region& admit(const std::string& path, std::uint64_t region, std::optional<Region>* evicted = nullptr);
  std::optional<Region> evict_oldest();
  void drop_path(const std::string& path);

  std::size_t size() const noexcept { return fifo_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const MetaIndex& meta() const noexcept { return meta_; }
  std::vector<std::pair<std::string, std::uint64_t>> order() const;  // oldest first

 private:
  std::size_t capacity_;
  std::uint64_t region_bytes_;
  std::uint64_t clock_ = 0;
  std::list<std::unique_ptr<Region>> fifo_;
  MetaIndex meta_;
};

// ---------------------------------------------------------------- statistics

struct TierStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t bytes_served = 0;  // requested bytes answered by this tier
  std::uint64_t evictions = 0;
};

struct CacheStats {
  TierStats buffer, region, shared, backend;
  std::uint64_t requests = 0;
  std::uint64_t bytes_requested = 0;
  std::uint64_t bytes_from_backend = 0;
  std::uint64_t backend_reads = 0;
  std::uint64_t coalesced_fetches = 0;  // shared-tier requests covering a run of segments

  bool balanced() const {
    return buffer.bytes_served + region.bytes_served + shared.bytes_served + backend.bytes_served == bytes_requested;
  }
  nlohmann::ordered_json to_json() const;
};

// ---------------------------------------------------------------- write path

struct FlushEvent {
  std::uint64_t seq = 0;
  std::uint32_t node = 0;
  std::uint64_t block = 0;
  bool start = true;
};

struct WriteOptions {
  bool crash_before_concat = false;
  std::vector<std::uint64_t> chunk_order;  // delivery order of chunk indexes; in order when empty
  std::function<void()> before_concat;     // runs after the uploads, while the path is held
};

struct WriteReport {
  std::uint64_t blocks = 0;
  std::uint64_t chunks = 0;
  std::uint64_t staged_appends = 0;  // appends of contiguous chunk runs to temp objects
  std::vector<FlushEvent> events;
  bool committed = false;
  bool interleaved() const;  // some block flush started before another finished
};

// ---------------------------------------------------------------- the plane

class CachePlane {
 public:
  CachePlane(std::filesystem::path backend_root, CacheConfig cfg);
  ~CachePlane();

  Bytes read_range(const std::string& path, std::uint64_t offset, std::uint64_t length);
  WriteReport write_file(const std::string& path, ByteSpan bytes, const WriteOptions& options = {});
  std::size_t recover();  // removes temporary objects left by interrupted writes

  std::uint32_t owner(const std::string& path, std::uint64_t block) const;
  void remove_node(std::uint32_t node);

  // One region (FIFO) and one buffer frame (clock), when present.
  struct Victims {
    std::optional<std::pair<std::string, std::uint64_t>> region;
    std::optional<SegmentKey> frame;
  };
  Victims evict_tick();

  const CacheStats& stats() const noexcept { return stats_; }
  void reset_stats() { stats_ = {}; }
  const CacheConfig& config() const noexcept { return cfg_; }
  Backend& backend() noexcept { return backend_; }
  BufferPool& buffers() noexcept { return buffers_; }
  RegionStore& regions() noexcept { return regions_; }
  // Blocks of each written file and the node that uploaded them.
  const std::map<std::string, std::vector<std::uint32_t>>& registry() const noexcept { return registry_; }

 private:
  struct Node {
    std::mutex mu;
    std::list<std::pair<std::string, Bytes>> lru;  // front = most recent
    std::unordered_map<std::string, std::list<std::pair<std::string, Bytes>>::iterator> index;
  };
  const Bytes& shared_chunk(const std::string& path, std::uint64_t chunk, std::uint64_t file_size);
  void drop_path(const std::string& path);

  CacheConfig cfg_;
  Backend backend_;
  HashRing ring_;
  std::map<std::uint32_t, std::unique_ptr<Node>> nodes_;
  RegionStore regions_;
  BufferPool buffers_;
  CacheStats stats_;
  std::map<std::string, std::uint64_t> sizes_;
  std::map<std::string, std::vector<std::uint32_t>> registry_;
  std::mutex writers_mu_;
  std::map<std::string, int> writers_;
};

}  // namespace minihouse::cache
