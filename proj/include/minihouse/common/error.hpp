#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace minihouse {

enum class ErrorCode {
  // format
  SortViolation,
  SchemaMismatch,
  BadMagic,
  UnsupportedVersion,
  FooterChecksumMismatch,
  DescriptorCorrupt,
  MalformedDescriptor,
  NoSortKey,
  UnknownColumn,
  OutOfRange,
  CodecMismatch,
  BlockChecksumMismatch,
  // encodings
  UnsupportedType,
  ValueOutOfCodecRange,
  MalformedPayload,
  // engine
  TxnClosed,
  TxnBusy,
  UnknownTable,
  SnapshotRetired,
  WalCorrupt,
  // compaction
  InvalidConfig,
  SegmentRetired,
  // ivm
  UnsupportedAggregate,
  KeyMismatch,
  StateInconsistent,
  EmptyHistory,
  ParseError,
  // hybrid
  DomainTooLarge,
  DimensionMismatch,
  // cache
  EmptyRing,
  NotFound,
  IoError,
  ConcatConflict,
  AllPinned,
};

std::string_view to_string(ErrorCode code) noexcept;

// True for codes that indicate damaged bytes rather than misuse.
bool is_corruption(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace minihouse
