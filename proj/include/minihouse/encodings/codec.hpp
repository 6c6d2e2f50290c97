#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "minihouse/common/bytes.hpp"
#include "minihouse/common/value.hpp"

namespace minihouse::enc {

// Wire ids; these values are part of the .snf format.
enum class CodecId : std::uint8_t {
  Plain = 0,
  ForBitpack = 1,
  Rle = 2,
  Dict = 3,
  FsstLite = 4,
  Alp = 5,
};

std::string_view to_string(CodecId id) noexcept;
std::optional<CodecId> parse_codec(std::string_view name) noexcept;
bool is_valid_codec(std::uint8_t raw) noexcept;

// Dense, null-free values of one scalar column type.
using TypedValues = std::variant<std::vector<std::int64_t>, std::vector<double>, std::vector<std::string>>;

ColumnType type_of(const TypedValues& values) noexcept;
std::size_t size_of(const TypedValues& values) noexcept;
TypedValues empty_values(ColumnType type);

// Codecs applicable to a scalar type, in tie-break precedence order.
std::vector<CodecId> candidate_codecs(ColumnType type);

struct EncodedBlock {
  CodecId codec = CodecId::Plain;
  ColumnType type = ColumnType::Int64;
  std::uint32_t row_count = 0;
  Bytes payload;  // codec header followed by codec data

  std::size_t encoded_size() const noexcept { return payload.size(); }
};

// Codec parameters recovered from a block header, for inspection and tests.
struct CodecParams {
  std::optional<std::int64_t> base;
  std::optional<std::uint8_t> bit_width;
  std::optional<std::uint8_t> exponent;
  std::optional<std::uint32_t> runs;
  std::optional<std::uint32_t> dictionary_size;
  std::optional<std::uint32_t> symbol_count;
};

inline constexpr double kDefaultLambda = 0.25;
inline constexpr std::size_t kSampleRows = 1024;

struct EncodingChoice {
  CodecId codec = CodecId::Plain;
  CodecParams params;
  std::size_t encoded_size = 0;
  double decode_ops = 0;
  double cost = 0;
};

// cost = encoded_size + lambda * decode_ops, evaluated by encoding the sample with every
// applicable codec. Codecs that reject the sample (ALP on non-decimal data) are skipped.
EncodingChoice choose_encoding(ColumnType type, const TypedValues& sample, double lambda = kDefaultLambda);

// Cost of every applicable codec on the sample, in precedence order; nullopt if rejected.
std::vector<std::pair<CodecId, std::optional<EncodingChoice>>> evaluate_codecs(ColumnType type,
                                                                               const TypedValues& sample,
                                                                               double lambda = kDefaultLambda);

// Leading min(kSampleRows, n) values.
TypedValues head_sample(const TypedValues& values, std::size_t max_rows = kSampleRows);

EncodedBlock encode_block(CodecId codec, const TypedValues& values);
TypedValues decode_block(const EncodedBlock& block);

// Per-codec decode work model: PLAIN n, RLE n + 2*runs, FOR 2n, DICT 2n + d, FSST code bytes + n, ALP 3n.
double estimated_decode_ops(const EncodedBlock& block);
CodecParams inspect_params(const EncodedBlock& block);

// Bit packing helpers shared by FOR, DICT and ALP.
Bytes pack_bits(const std::vector<std::uint64_t>& values, std::uint8_t width);
std::vector<std::uint64_t> unpack_bits(ByteSpan packed, std::size_t count, std::uint8_t width);
std::uint8_t bits_needed(std::uint64_t max_value) noexcept;

}  // namespace minihouse::enc
