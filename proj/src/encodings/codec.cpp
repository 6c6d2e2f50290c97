#include "minihouse/encodings/codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <unordered_map>

#include "fsst_lite.hpp"

namespace minihouse::enc {

std::string_view to_string(CodecId id) noexcept {
  switch (id) {
    case CodecId::Plain: return "PLAIN";
    case CodecId::ForBitpack: return "FOR_BITPACK";
    case CodecId::Rle: return "RLE";
    case CodecId::Dict: return "DICT";
    case CodecId::FsstLite: return "FSST_LITE";
    case CodecId::Alp: return "ALP";
  }
  return "?";
}

std::optional<CodecId> parse_codec(std::string_view name) noexcept {
  for (auto id : {CodecId::Plain, CodecId::ForBitpack, CodecId::Rle, CodecId::Dict, CodecId::FsstLite, CodecId::Alp}) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

bool is_valid_codec(std::uint8_t raw) noexcept { return raw <= static_cast<std::uint8_t>(CodecId::Alp); }

ColumnType type_of(const TypedValues& values) noexcept {
  switch (values.index()) {
    case 0: return ColumnType::Int64;
    case 1: return ColumnType::Float64;
    default: return ColumnType::String;
  }
}

std::size_t size_of(const TypedValues& values) noexcept {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

TypedValues empty_values(ColumnType type) {
  switch (type) {
    case ColumnType::Int64: return std::vector<std::int64_t>{};
    case ColumnType::Float64: return std::vector<double>{};
    case ColumnType::String: return std::vector<std::string>{};
    default: fail(ErrorCode::UnsupportedType, "no scalar codec for type " + std::string(to_string(type)));
  }
}

std::vector<CodecId> candidate_codecs(ColumnType type) {
  switch (type) {
    case ColumnType::Int64: return {CodecId::Plain, CodecId::Rle, CodecId::ForBitpack};
    case ColumnType::Float64: return {CodecId::Plain, CodecId::Rle, CodecId::Alp};
    case ColumnType::String: return {CodecId::Plain, CodecId::Rle, CodecId::Dict, CodecId::FsstLite};
    default: fail(ErrorCode::UnsupportedType, "no scalar codec for type " + std::string(to_string(type)));
  }
}

std::uint8_t bits_needed(std::uint64_t max_value) noexcept {
  return static_cast<std::uint8_t>(std::bit_width(max_value));
}

Bytes pack_bits(const std::vector<std::uint64_t>& values, std::uint8_t width) {
  Bytes out((values.size() * width + 7) / 8, 0);
  if (width == 0) return out;
  std::size_t bit = 0;
  for (auto v : values) {
    for (std::uint8_t i = 0; i < width; ++i, ++bit) {
      if ((v >> i) & 1u) out[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
    }
  }
  return out;
}

std::vector<std::uint64_t> unpack_bits(ByteSpan packed, std::size_t count, std::uint8_t width) {
  std::vector<std::uint64_t> out(count, 0);
  if (width == 0) return out;
  std::size_t bit = 0;
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t v = 0;
    for (std::uint8_t i = 0; i < width; ++i, ++bit) {
      if (packed[bit >> 3] & (1u << (bit & 7))) v |= std::uint64_t{1} << i;
    }
    out[k] = v;
  }
  return out;
}

namespace {

std::size_t packed_len(std::size_t count, std::uint8_t width) { return (count * width + 7) / 8; }

[[noreturn]] void type_mismatch(CodecId codec, ColumnType type) {
  fail(ErrorCode::UnsupportedType,
       std::string(to_string(codec)) + " does not accept " + std::string(to_string(type)) + " values");
}

// ---- scalar element I/O ----

void put_one(ByteWriter& w, std::int64_t v) { w.put(v); }
void put_one(ByteWriter& w, double v) { w.put(v); }
void put_one(ByteWriter& w, const std::string& v) { w.put_string(v); }

template <class T>
T get_one(ByteReader& r) {
  if constexpr (std::is_same_v<T, std::string>) {
    return r.get_string();
  } else {
    return r.get<T>();
  }
}

template <class T>
bool same_bits(const T& a, const T& b) {
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
  } else {
    return a == b;
  }
}

// ---- FOR ----

void write_for(ByteWriter& w, const std::vector<std::int64_t>& values) {
  std::int64_t base = values.empty() ? 0 : *std::min_element(values.begin(), values.end());
  std::vector<std::uint64_t> deltas;
  deltas.reserve(values.size());
  std::uint64_t max_delta = 0;
  for (auto v : values) {
    auto d = static_cast<std::uint64_t>(v) - static_cast<std::uint64_t>(base);
    max_delta = std::max(max_delta, d);
    deltas.push_back(d);
  }
  const auto width = bits_needed(max_delta);
  w.put(base);
  w.put(width);
  w.put_bytes(ByteSpan(pack_bits(deltas, width)));
}

std::vector<std::int64_t> read_for(ByteReader& r, std::size_t n) {
  const auto base = r.get<std::int64_t>();
  const auto width = r.get<std::uint8_t>();
  if (width > 64) r.raise("FOR: bit width " + std::to_string(width));
  auto deltas = unpack_bits(r.get_bytes(packed_len(n, width)), n, width);
  std::vector<std::int64_t> out;
  out.reserve(n);
  for (auto d : deltas) out.push_back(static_cast<std::int64_t>(static_cast<std::uint64_t>(base) + d));
  return out;
}

// ---- RLE ----

template <class T>
void write_rle(ByteWriter& w, const std::vector<T>& values) {
  const auto runs_pos = w.size();
  w.put<std::uint32_t>(0);
  std::uint32_t runs = 0;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i + 1;
    while (j < values.size() && same_bits(values[j], values[i])) ++j;
    put_one(w, values[i]);
    w.put(static_cast<std::uint32_t>(j - i));
    ++runs;
    i = j;
  }
  w.patch_u32(runs_pos, runs);
}

template <class T>
std::vector<T> read_rle(ByteReader& r, std::size_t n) {
  const auto runs = r.get<std::uint32_t>();
  std::vector<T> out;
  out.reserve(n);
  for (std::uint32_t k = 0; k < runs; ++k) {
    T v = get_one<T>(r);
    const auto count = r.get<std::uint32_t>();
    if (count == 0 || count > n - out.size()) r.raise("RLE: run lengths disagree with row count");
    out.insert(out.end(), count, v);
  }
  if (out.size() != n) r.raise("RLE: run lengths disagree with row count");
  return out;
}

// ---- DICT ----

void write_dict(ByteWriter& w, const std::vector<std::string>& values) {
  std::vector<std::string> dict(values.begin(), values.end());
  std::sort(dict.begin(), dict.end());
  dict.erase(std::unique(dict.begin(), dict.end()), dict.end());
  std::unordered_map<std::string_view, std::uint64_t> code_of;
  for (std::size_t i = 0; i < dict.size(); ++i) code_of.emplace(dict[i], i);
  w.put(static_cast<std::uint32_t>(dict.size()));
  for (const auto& s : dict) w.put_string(s);
  std::vector<std::uint64_t> codes;
  codes.reserve(values.size());
  for (const auto& v : values) codes.push_back(code_of.at(v));
  const auto width = bits_needed(dict.empty() ? 0 : dict.size() - 1);
  w.put(width);
  w.put_bytes(ByteSpan(pack_bits(codes, width)));
}

std::vector<std::string> read_dict(ByteReader& r, std::size_t n) {
  const auto d = r.get<std::uint32_t>();
  if (d > r.remaining() / 4) r.raise("DICT: dictionary size exceeds payload");
  std::vector<std::string> dict;
  dict.reserve(d);
  for (std::uint32_t i = 0; i < d; ++i) dict.push_back(r.get_string());
  const auto width = r.get<std::uint8_t>();
  if (width > 32) r.raise("DICT: code width " + std::to_string(width));
  auto codes = unpack_bits(r.get_bytes(packed_len(n, width)), n, width);
  std::vector<std::string> out;
  out.reserve(n);
  for (auto c : codes) {
    if (c >= d) r.raise("DICT: code out of dictionary");
    out.push_back(dict[c]);
  }
  return out;
}

// ---- ALP ----

constexpr int kMaxExponent = 18;

// Exact powers of ten; every entry up to 1e22 is representable as a double.
constexpr std::array<double, kMaxExponent + 1> kPow10 = {1e0,  1e1,  1e2,  1e3,  1e4,  1e5,  1e6,
                                                         1e7,  1e8,  1e9,  1e10, 1e11, 1e12, 1e13,
                                                         1e14, 1e15, 1e16, 1e17, 1e18};

std::optional<std::int64_t> alp_scale(double v, int e) {
  const double scaled = v * kPow10[e];
  if (!std::isfinite(scaled) || std::fabs(scaled) >= 9.0e18) return std::nullopt;
  const auto i = static_cast<std::int64_t>(std::llround(scaled));
  const double back = static_cast<double>(i) / kPow10[e];
  if (std::bit_cast<std::uint64_t>(back) != std::bit_cast<std::uint64_t>(v)) return std::nullopt;
  return i;
}

void write_alp(ByteWriter& w, const std::vector<double>& values) {
  for (int e = 0; e <= kMaxExponent; ++e) {
    std::vector<std::int64_t> ints;
    ints.reserve(values.size());
    bool ok = true;
    for (double v : values) {
      auto i = alp_scale(v, e);
      if (!i) {
        ok = false;
        break;
      }
      ints.push_back(*i);
    }
    if (!ok) continue;
    w.put(static_cast<std::uint8_t>(e));
    write_for(w, ints);
    return;
  }
  fail(ErrorCode::ValueOutOfCodecRange, "ALP: values are not exact decimals with exponent <= 18");
}

std::vector<double> read_alp(ByteReader& r, std::size_t n) {
  const auto e = r.get<std::uint8_t>();
  if (e > kMaxExponent) r.raise("ALP: exponent " + std::to_string(e));
  auto ints = read_for(r, n);
  std::vector<double> out;
  out.reserve(n);
  for (auto i : ints) out.push_back(static_cast<double>(i) / kPow10[e]);
  return out;
}

// ---- PLAIN ----

template <class T>
void write_plain(ByteWriter& w, const std::vector<T>& values) {
  for (const auto& v : values) put_one(w, v);
}

template <class T>
std::vector<T> read_plain(ByteReader& r, std::size_t n) {
  if constexpr (!std::is_same_v<T, std::string>) {
    if (r.remaining() != n * sizeof(T)) r.raise("PLAIN: payload length disagrees with row count");
  } else if (r.remaining() / 4 < n) {
    r.raise("PLAIN: payload too short for row count");
  }
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(get_one<T>(r));
  return out;
}

bool accepts(CodecId codec, ColumnType type) {
  switch (codec) {
    case CodecId::Plain:
    case CodecId::Rle: return type != ColumnType::Vector;
    case CodecId::ForBitpack: return type == ColumnType::Int64;
    case CodecId::Dict:
    case CodecId::FsstLite: return type == ColumnType::String;
    case CodecId::Alp: return type == ColumnType::Float64;
  }
  return false;
}

}  // namespace

EncodedBlock encode_block(CodecId codec, const TypedValues& values) {
  EncodedBlock block;
  block.codec = codec;
  block.type = type_of(values);
  block.row_count = static_cast<std::uint32_t>(size_of(values));
  if (!accepts(codec, block.type)) type_mismatch(codec, block.type);
  ByteWriter w(block.payload);
  std::visit(
      [&](const auto& vals) {
        using V = std::decay_t<decltype(vals)>;
        using T = typename V::value_type;
        switch (codec) {
          case CodecId::Plain: write_plain(w, vals); break;
          case CodecId::Rle: write_rle(w, vals); break;
          case CodecId::ForBitpack:
            if constexpr (std::is_same_v<T, std::int64_t>) write_for(w, vals);
            break;
          case CodecId::Dict:
            if constexpr (std::is_same_v<T, std::string>) write_dict(w, vals);
            break;
          case CodecId::FsstLite:
            if constexpr (std::is_same_v<T, std::string>) detail::write_fsst(w, vals);
            break;
          case CodecId::Alp:
            if constexpr (std::is_same_v<T, double>) write_alp(w, vals);
            break;
        }
      },
      values);
  return block;
}

TypedValues decode_block(const EncodedBlock& block) {
  if (!accepts(block.codec, block.type)) {
    fail(ErrorCode::MalformedPayload, std::string(to_string(block.codec)) + " block with type " +
                                          std::string(to_string(block.type)));
  }
  ByteReader r{ByteSpan(block.payload)};
  const std::size_t n = block.row_count;
  TypedValues out = empty_values(block.type);
  std::visit(
      [&](auto& vals) {
        using V = std::decay_t<decltype(vals)>;
        using T = typename V::value_type;
        switch (block.codec) {
          case CodecId::Plain: vals = read_plain<T>(r, n); break;
          case CodecId::Rle: vals = read_rle<T>(r, n); break;
          case CodecId::ForBitpack:
            if constexpr (std::is_same_v<T, std::int64_t>) vals = read_for(r, n);
            break;
          case CodecId::Dict:
            if constexpr (std::is_same_v<T, std::string>) vals = read_dict(r, n);
            break;
          case CodecId::FsstLite:
            if constexpr (std::is_same_v<T, std::string>) vals = detail::read_fsst(r, n);
            break;
          case CodecId::Alp:
            if constexpr (std::is_same_v<T, double>) vals = read_alp(r, n);
            break;
        }
      },
      out);
  r.expect_end(std::string(to_string(block.codec)).c_str());
  return out;
}

CodecParams inspect_params(const EncodedBlock& block) {
  CodecParams p;
  ByteReader r{ByteSpan(block.payload)};
  switch (block.codec) {
    case CodecId::Plain: break;
    case CodecId::Rle: p.runs = r.get<std::uint32_t>(); break;
    case CodecId::ForBitpack:
      p.base = r.get<std::int64_t>();
      p.bit_width = r.get<std::uint8_t>();
      break;
    case CodecId::Dict: {
      const auto d = r.get<std::uint32_t>();
      p.dictionary_size = d;
      for (std::uint32_t i = 0; i < d; ++i) r.get_string();
      p.bit_width = r.get<std::uint8_t>();
      break;
    }
    case CodecId::FsstLite: p.symbol_count = r.get<std::uint8_t>(); break;
    case CodecId::Alp:
      p.exponent = r.get<std::uint8_t>();
      p.base = r.get<std::int64_t>();
      p.bit_width = r.get<std::uint8_t>();
      break;
  }
  return p;
}

double estimated_decode_ops(const EncodedBlock& block) {
  const double n = block.row_count;
  const auto p = inspect_params(block);
  switch (block.codec) {
    case CodecId::Plain: return n;
    case CodecId::Rle: return n + 2.0 * p.runs.value_or(0);
    case CodecId::ForBitpack: return 2.0 * n;
    case CodecId::Dict: return 2.0 * n + p.dictionary_size.value_or(0);
    case CodecId::FsstLite: return static_cast<double>(detail::fsst_code_bytes(block)) + n;
    case CodecId::Alp: return 3.0 * n;
  }
  return n;
}

TypedValues head_sample(const TypedValues& values, std::size_t max_rows) {
  return std::visit(
      [&](const auto& v) -> TypedValues {
        using V = std::decay_t<decltype(v)>;
        return V(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(max_rows, v.size())));
      },
      values);
}

std::vector<std::pair<CodecId, std::optional<EncodingChoice>>> evaluate_codecs(ColumnType type,
                                                                               const TypedValues& sample,
                                                                               double lambda) {
  if (type_of(sample) != type) {
    fail(ErrorCode::UnsupportedType, "sample type " + std::string(to_string(type_of(sample))) +
                                         " does not match column type " + std::string(to_string(type)));
  }
  std::vector<std::pair<CodecId, std::optional<EncodingChoice>>> out;
  for (auto codec : candidate_codecs(type)) {
    std::optional<EncodingChoice> choice;
    try {
      auto block = encode_block(codec, sample);
      EncodingChoice c;
      c.codec = codec;
      c.params = inspect_params(block);
      c.encoded_size = block.encoded_size();
      c.decode_ops = estimated_decode_ops(block);
      c.cost = static_cast<double>(c.encoded_size) + lambda * c.decode_ops;
      choice = c;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ValueOutOfCodecRange) throw;
    }
    out.emplace_back(codec, choice);
  }
  return out;
}

EncodingChoice choose_encoding(ColumnType type, const TypedValues& sample, double lambda) {
  std::optional<EncodingChoice> best;
  for (auto& [codec, choice] : evaluate_codecs(type, sample, lambda)) {
    if (choice && (!best || choice->cost < best->cost)) best = choice;
  }
  return *best;  // PLAIN never rejects
}

}  // namespace minihouse::enc
