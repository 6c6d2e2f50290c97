#include "minihouse/cache/cache.hpp"
#include "minihouse/common/error.hpp"

namespace minihouse::cache {

std::string format_segment(const SegmentKey& k) { return k.path + "@" + std::to_string(k.index); }

// ---------------------------------------------------------------- buffer pool

const Bytes* BufferPool::lookup(const SegmentKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return nullptr;
  auto& f = frames_[it->second];
  f.ref = true;
  return &f.bytes;
}

std::optional<SegmentKey> BufferPool::insert(const SegmentKey& key, Bytes bytes) {
  if (auto it = index_.find(key); it != index_.end()) {
    auto& f = frames_[it->second];
    f.bytes = std::move(bytes);
    f.ref = true;
    return std::nullopt;
  }
  std::optional<SegmentKey> victim;
  std::size_t slot = 0;
  if (index_.size() < frames_.size()) {
    while (frames_[slot].used) ++slot;
  } else if (frames_.size() < capacity_) {
    slot = frames_.size();
    frames_.emplace_back();
  } else {
    victim = evict_one();
    while (frames_[slot].used) ++slot;
  }
  auto& f = frames_[slot];
  f = Frame{key, std::move(bytes), true, 0, true};
  index_[key] = slot;
  return victim;
}

void BufferPool::pin(const SegmentKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) fail(ErrorCode::NotFound, "no frame for " + format_segment(key));
  ++frames_[it->second].pins;
}

void BufferPool::unpin(const SegmentKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) fail(ErrorCode::NotFound, "no frame for " + format_segment(key));
  auto& f = frames_[it->second];
  if (f.pins == 0) fail(ErrorCode::StateInconsistent, "unpin of unpinned frame " + format_segment(key));
  --f.pins;
}

bool BufferPool::referenced(const SegmentKey& key) const {
  auto it = index_.find(key);
  return it != index_.end() && frames_[it->second].ref;
}

SegmentKey BufferPool::evict_one() {
  if (index_.empty()) fail(ErrorCode::NotFound, "buffer pool is empty");
  // Two full turns: the first may only clear bits.
  for (std::size_t step = 0; step < 2 * frames_.size() + 1; ++step) {
    auto& f = frames_[hand_];
    const std::size_t at = hand_;
    hand_ = (hand_ + 1) % frames_.size();
    if (!f.used || f.pins > 0) continue;
    if (f.ref) {
      f.ref = false;
      continue;
    }
    SegmentKey victim = f.key;
    index_.erase(victim);
    frames_[at] = Frame{};
    return victim;
  }
  fail(ErrorCode::AllPinned, "every buffer frame is pinned");
}

void BufferPool::drop_path(const std::string& path) {
  for (auto it = index_.begin(); it != index_.end();) {
    if (it->first.path == path && frames_[it->second].pins == 0) {
      frames_[it->second] = Frame{};
      it = index_.erase(it);
    } else {
      ++it;
    }
  }
}

// ---------------------------------------------------------------- meta index

Region* MetaIndex::find(const std::string& path, std::uint64_t region) const {
  auto a = buckets_.find(stable_hash(path));
  if (a == buckets_.end()) return nullptr;
  auto b = a->second.find(region);
  if (b == a->second.end()) return nullptr;
  for (auto* r : b->second) {
    if (r->path == path) return r;
  }
  return nullptr;
}

void MetaIndex::put(Region* r) {
  auto& slot = buckets_[stable_hash(r->path)][r->index];
  for (auto*& existing : slot) {
    if (existing->path == r->path) {
      existing = r;
      return;
    }
  }
  slot.push_back(r);
  ++count_;
}

void MetaIndex::erase(const std::string& path, std::uint64_t region) {
  auto a = buckets_.find(stable_hash(path));
  if (a == buckets_.end()) return;
  auto b = a->second.find(region);
  if (b == a->second.end()) return;
  auto& v = b->second;
  for (auto it = v.begin(); it != v.end(); ++it) {
    if ((*it)->path == path) {
      v.erase(it);
      --count_;
      break;
    }
  }
  if (v.empty()) a->second.erase(b);
  if (a->second.empty()) buckets_.erase(a);
}

nlohmann::json MetaIndex::serialize() const {
  std::vector<const Region*> all;
  for (const auto& [_, by_region] : buckets_) {
    for (const auto& [__, v] : by_region) all.insert(all.end(), v.begin(), v.end());
  }
  std::sort(all.begin(), all.end(), [](const Region* a, const Region* b) { return a->admitted < b->admitted; });
  auto out = nlohmann::json::array();
  for (const auto* r : all) {
    std::vector<std::uint64_t> segs;
    for (const auto& [s, _] : r->segments) segs.push_back(s);
    out.push_back({{"path", r->path}, {"region", r->index}, {"admitted", r->admitted}, {"segments", segs}});
  }
  return out;
}

std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t, std::vector<std::uint64_t>>> MetaIndex::entries(
    const nlohmann::json& j) {
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t, std::vector<std::uint64_t>>> out;
  try {
    for (const auto& e : j) {
      out.emplace_back(e.at("path").get<std::string>(), e.at("region").get<std::uint64_t>(),
                       e.at("admitted").get<std::uint64_t>(), e.at("segments").get<std::vector<std::uint64_t>>());
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::ParseError, std::string("bad cache metadata: ") + ex.what());
  }
  return out;
}

// ---------------------------------------------------------------- regions

Region& RegionStore::admit(const std::string& path, std::uint64_t region, std::optional<Region>* evicted) {
  if (auto* r = meta_.find(path, region)) return *r;
  if (fifo_.size() >= capacity_) {
    auto old = evict_oldest();
    if (evicted) *evicted = std::move(old);
  }
  auto r = std::make_unique<Region>();
  r->path = path;
  r->index = region;
  r->admitted = ++clock_;
  auto* raw = r.get();
  fifo_.push_back(std::move(r));
  meta_.put(raw);
  return *raw;
}

std::optional<Region> RegionStore::evict_oldest() {
  if (fifo_.empty()) return std::nullopt;
  auto r = std::move(fifo_.front());
  fifo_.pop_front();
  meta_.erase(r->path, r->index);
  return std::move(*r);
}

void RegionStore::drop_path(const std::string& path) {
  for (auto it = fifo_.begin(); it != fifo_.end();) {
    if ((*it)->path == path) {
      meta_.erase(path, (*it)->index);
      it = fifo_.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<std::pair<std::string, std::uint64_t>> RegionStore::order() const {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& r : fifo_) out.push_back({r->path, r->index});
  return out;
}

}  // namespace minihouse::cache
