#include <algorithm>
#include <atomic>
#include <latch>
#include <thread>

#include "minihouse/cache/cache.hpp"
#include "minihouse/common/error.hpp"

namespace minihouse::cache {

namespace fs = std::filesystem;

nlohmann::ordered_json CacheStats::to_json() const {
  auto tier = [](const TierStats& t) {
    return nlohmann::ordered_json{{"hits", t.hits}, {"misses", t.misses}, {"bytes_served", t.bytes_served},
                                  {"evictions", t.evictions}};
  };
  return {{"requests", requests},
          {"bytes_requested", bytes_requested},
          {"buffer", tier(buffer)},
          {"region", tier(region)},
          {"shared", tier(shared)},
          {"backend", tier(backend)},
          {"backend_reads", backend_reads},
          {"bytes_from_backend", bytes_from_backend},
          {"coalesced_fetches", coalesced_fetches}};
}

bool WriteReport::interleaved() const {
  std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> span;  // block -> (start, end)
  for (const auto& e : events) (e.start ? span[e.block].first : span[e.block].second) = e.seq;
  for (const auto& [a, sa] : span) {
    for (const auto& [b, sb] : span) {
      if (a != b && sa.first < sb.second && sb.first < sa.second) return true;
    }
  }
  return false;
}

CachePlane::CachePlane(fs::path backend_root, CacheConfig cfg)
    : cfg_(cfg), backend_(std::move(backend_root)), ring_(cfg.vnodes), regions_(cfg.region_capacity, cfg.region_bytes),
      buffers_(cfg.buffer_frames) {
  cfg_.validate();
  for (std::uint32_t n = 0; n < cfg_.nodes; ++n) {
    ring_.add_node(n);
    nodes_[n] = std::make_unique<Node>();
  }
}

CachePlane::~CachePlane() = default;

std::uint32_t CachePlane::owner(const std::string& path, std::uint64_t block) const {
  return ring_.place(path + "#" + std::to_string(block));
}

void CachePlane::remove_node(std::uint32_t node) {
  ring_.remove_node(node);
  nodes_.erase(node);
}

const Bytes& CachePlane::shared_chunk(const std::string& path, std::uint64_t chunk, std::uint64_t file_size) {
  const std::uint64_t block = chunk * cfg_.chunk_bytes / cfg_.block_bytes;
  auto& node = *nodes_.at(owner(path, block));
  std::lock_guard lock(node.mu);
  const std::string key = path + "#" + std::to_string(chunk);
  if (auto it = node.index.find(key); it != node.index.end()) {
    ++stats_.shared.hits;
    node.lru.splice(node.lru.begin(), node.lru, it->second);
    return it->second->second;
  }
  ++stats_.shared.misses;
  const std::uint64_t begin = chunk * cfg_.chunk_bytes;
  auto bytes = backend_.read(path, begin, std::min(cfg_.chunk_bytes, file_size - begin));
  ++stats_.backend_reads;
  ++stats_.backend.hits;
  stats_.bytes_from_backend += bytes.size();
  if (node.lru.size() >= cfg_.node_chunk_capacity) {
    node.index.erase(node.lru.back().first);
    node.lru.pop_back();
    ++stats_.shared.evictions;
  }
  node.lru.emplace_front(key, std::move(bytes));
  node.index[key] = node.lru.begin();
  return node.lru.front().second;
}

Bytes CachePlane::read_range(const std::string& path, std::uint64_t offset, std::uint64_t length) {
  std::uint64_t size;
  if (auto it = sizes_.find(path); it != sizes_.end()) {
    size = it->second;
  } else {
    size = backend_.size(path);
    sizes_[path] = size;
  }
  if (offset > size || length > size - offset) {
    fail(ErrorCode::OutOfRange, "range [" + std::to_string(offset) + ", +" + std::to_string(length) + ") beyond '" +
                                    path + "' of " + std::to_string(size) + " bytes");
  }
  ++stats_.requests;
  stats_.bytes_requested += length;
  Bytes out;
  out.reserve(length);
  if (length == 0) return out;

  const std::uint64_t seg = cfg_.segment_bytes;
  const std::uint64_t first = offset / seg, last = (offset + length - 1) / seg;
  const std::uint64_t per_region = cfg_.segments_per_region();
  const std::uint64_t per_chunk = cfg_.chunk_bytes / seg;

  auto serve = [&](std::uint64_t s, const Bytes& bytes, TierStats& tier) {
    const std::uint64_t s_begin = s * seg;
    const std::uint64_t lo = std::max(offset, s_begin) - s_begin;
    const std::uint64_t hi = std::min(offset + length, s_begin + bytes.size()) - s_begin;
    out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(lo), bytes.begin() + static_cast<std::ptrdiff_t>(hi));
    tier.bytes_served += hi - lo;
  };
  auto admit = [&](std::uint64_t s, const Bytes& bytes) {
    std::optional<Region> evicted;
    auto& r = regions_.admit(path, s / per_region, &evicted);
    if (evicted) ++stats_.region.evictions;
    r.segments[s] = bytes;
    if (buffers_.insert({path, s}, bytes)) ++stats_.buffer.evictions;
  };

  for (std::uint64_t s = first; s <= last;) {
    if (const auto* b = buffers_.lookup({path, s})) {
      ++stats_.buffer.hits;
      serve(s, *b, stats_.buffer);
      ++s;
      continue;
    }
    ++stats_.buffer.misses;
    if (auto* r = regions_.find(path, s / per_region); r && r->segments.count(s)) {
      ++stats_.region.hits;
      const Bytes bytes = r->segments.at(s);
      if (buffers_.insert({path, s}, bytes)) ++stats_.buffer.evictions;
      serve(s, bytes, stats_.region);
      ++s;
      continue;
    }
    ++stats_.region.misses;
    // Coalesce the run of segments missing from both compute tiers within this chunk.
    const std::uint64_t chunk = s / per_chunk;
    std::uint64_t end = s + 1;
    while (end <= last && end / per_chunk == chunk && !buffers_.contains({path, end})) {
      auto* r = regions_.find(path, end / per_region);
      if (r && r->segments.count(end)) break;
      ++end;
    }
    ++stats_.coalesced_fetches;
    const auto misses_before = stats_.shared.misses;
    const Bytes chunk_bytes = shared_chunk(path, chunk, size);
    TierStats& tier = stats_.shared.misses > misses_before ? stats_.backend : stats_.shared;
    for (std::uint64_t t = s; t < end; ++t) {
      if (t > s) {
        ++stats_.buffer.misses;
        ++stats_.region.misses;
      }
      const std::uint64_t lo = (t % per_chunk) * seg;
      const std::uint64_t hi = std::min<std::uint64_t>(lo + seg, chunk_bytes.size());
      Bytes bytes(chunk_bytes.begin() + static_cast<std::ptrdiff_t>(lo), chunk_bytes.begin() + static_cast<std::ptrdiff_t>(hi));
      admit(t, bytes);
      serve(t, bytes, tier);
    }
    s = end;
  }
  return out;
}

void CachePlane::drop_path(const std::string& path) {
  buffers_.drop_path(path);
  regions_.drop_path(path);
  const std::string prefix = path + "#";
  for (auto& [_, node] : nodes_) {
    std::lock_guard lock(node->mu);
    for (auto it = node->lru.begin(); it != node->lru.end();) {
      if (it->first.compare(0, prefix.size(), prefix) == 0) {
        node->index.erase(it->first);
        it = node->lru.erase(it);
      } else {
        ++it;
      }
    }
  }
  sizes_.erase(path);
}

WriteReport CachePlane::write_file(const std::string& path, ByteSpan bytes, const WriteOptions& options) {
  {
    std::lock_guard lock(writers_mu_);
    if (writers_[path]++ > 0) {
      --writers_[path];
      fail(ErrorCode::ConcatConflict, "'" + path + "' is already open for writing");
    }
  }
  struct Release {
    CachePlane* p;
    std::string path;
    ~Release() {
      std::lock_guard lock(p->writers_mu_);
      if (--p->writers_[path] == 0) p->writers_.erase(path);
    }
  } release{this, path};

  WriteReport rep;
  const std::uint64_t size = bytes.size();
  const std::uint64_t n_chunks = (size + cfg_.chunk_bytes - 1) / cfg_.chunk_bytes;
  const std::uint64_t per_block = cfg_.block_bytes / cfg_.chunk_bytes;
  const std::uint64_t n_blocks = (n_chunks + per_block - 1) / per_block;
  rep.blocks = n_blocks;
  rep.chunks = n_chunks;

  std::vector<std::uint64_t> order = options.chunk_order;
  if (order.empty()) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) order.push_back(c);
  }
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint64_t c = 0; c < sorted.size(); ++c) {
      if (sorted.size() != n_chunks || sorted[c] != c) fail(ErrorCode::InvalidConfig, "chunk order must be a permutation");
    }
  }

  // Staging: chunks wait per block until they extend the contiguous prefix by a run of at
  // least two chunks, or complete the block.
  struct BlockBuffer {
    std::map<std::uint64_t, ByteSpan> staged;  // chunk-in-block -> bytes
    std::uint64_t next = 0;
    Bytes contiguous;
  };
  std::vector<BlockBuffer> blocks(n_blocks);
  auto chunks_in = [&](std::uint64_t b) { return std::min(per_block, n_chunks - b * per_block); };
  for (auto c : order) {
    const std::uint64_t b = c / per_block;
    auto& bb = blocks[b];
    const std::uint64_t begin = c * cfg_.chunk_bytes;
    bb.staged[c % per_block] = bytes.subspan(begin, std::min(cfg_.chunk_bytes, size - begin));
    std::uint64_t run = 0;
    while (bb.staged.count(bb.next + run)) ++run;
    if (run >= 2 || (run > 0 && bb.next + run == chunks_in(b))) {
      for (std::uint64_t i = 0; i < run; ++i) {
        auto span = bb.staged.at(bb.next + i);
        bb.contiguous.insert(bb.contiguous.end(), span.begin(), span.end());
        bb.staged.erase(bb.next + i);
      }
      bb.next += run;
      ++rep.staged_appends;
    }
  }

  // Completed blocks upload as temporary objects; each owning node uploads its blocks in
  // order, and nodes upload concurrently.
  const fs::path p(path);
  const std::string dir = p.has_parent_path() ? p.parent_path().generic_string() + "/" : "";
  auto temp_name = [&](std::uint64_t b) { return dir + "." + p.filename().string() + ".b" + std::to_string(b) + ".tmp"; };
  std::map<std::uint32_t, std::vector<std::uint64_t>> by_node;
  std::vector<std::uint32_t> owners(n_blocks);
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    if (blocks[b].next != chunks_in(b)) fail(ErrorCode::StateInconsistent, "block " + std::to_string(b) + " incomplete");
    owners[b] = owner(path, b);
    by_node[owners[b]].push_back(b);
  }
  std::atomic<std::uint64_t> seq{0};
  std::mutex events_mu;
  std::latch started(static_cast<std::ptrdiff_t>(by_node.size()));
  std::vector<std::exception_ptr> errors(by_node.size());
  auto log = [&](std::uint32_t node, std::uint64_t b, bool start) {
    std::lock_guard lock(events_mu);
    rep.events.push_back({seq++, node, b, start});
  };
  {
    std::vector<std::jthread> workers;
    std::size_t w = 0;
    for (const auto& [node, list] : by_node) {
      workers.emplace_back([&, node = node, list = list, slot = w++] {
        bool first = true;
        for (auto b : list) {
          log(node, b, true);
          if (first) {
            started.arrive_and_wait();  // uploads are issued together across nodes
            first = false;
          }
          try {
            const auto& data = blocks[b].contiguous;
            for (std::uint64_t off = 0; off < data.size() || off == 0; off += cfg_.chunk_bytes) {
              const auto n = std::min<std::uint64_t>(cfg_.chunk_bytes, data.size() - off);
              backend_.write_temp(temp_name(b), ByteSpan(data.data() + off, n), off > 0);
              if (data.empty()) break;
            }
          } catch (...) {
            errors[slot] = std::current_exception();
          }
          log(node, b, false);
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(rep.events.begin(), rep.events.end(), [](const FlushEvent& a, const FlushEvent& b) { return a.seq < b.seq; });
  if (options.before_concat) options.before_concat();
  if (options.crash_before_concat) return rep;

  std::vector<std::string> temps;
  for (std::uint64_t b = 0; b < n_blocks; ++b) temps.push_back(temp_name(b));
  if (temps.empty()) backend_.put(path, ByteSpan());
  else backend_.concat(temps, path);
  drop_path(path);
  registry_[path] = owners;
  rep.committed = true;
  return rep;
}

std::size_t CachePlane::recover() { return backend_.remove_temps(); }

CachePlane::Victims CachePlane::evict_tick() {
  Victims v;
  if (auto r = regions_.evict_oldest()) {
    v.region = std::make_pair(r->path, r->index);
    ++stats_.region.evictions;
  }
  if (buffers_.size() > 0) {
    v.frame = buffers_.evict_one();
    ++stats_.buffer.evictions;
  }
  return v;
}

}  // namespace minihouse::cache
