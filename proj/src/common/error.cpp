#include "minihouse/common/error.hpp"

namespace minihouse {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SortViolation: return "SortViolation";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::FooterChecksumMismatch: return "FooterChecksumMismatch";
    case ErrorCode::DescriptorCorrupt: return "DescriptorCorrupt";
    case ErrorCode::MalformedDescriptor: return "MalformedDescriptor";
    case ErrorCode::NoSortKey: return "NoSortKey";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::CodecMismatch: return "CodecMismatch";
    case ErrorCode::BlockChecksumMismatch: return "BlockChecksumMismatch";
    case ErrorCode::UnsupportedType: return "UnsupportedType";
    case ErrorCode::ValueOutOfCodecRange: return "ValueOutOfCodecRange";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::TxnClosed: return "TxnClosed";
    case ErrorCode::TxnBusy: return "TxnBusy";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::SnapshotRetired: return "SnapshotRetired";
    case ErrorCode::WalCorrupt: return "WalCorrupt";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SegmentRetired: return "SegmentRetired";
    case ErrorCode::UnsupportedAggregate: return "UnsupportedAggregate";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::StateInconsistent: return "StateInconsistent";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DomainTooLarge: return "DomainTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyRing: return "EmptyRing";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConcatConflict: return "ConcatConflict";
    case ErrorCode::AllPinned: return "AllPinned";
  }
  return "Unknown";
}

bool is_corruption(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic:
    case ErrorCode::FooterChecksumMismatch:
    case ErrorCode::DescriptorCorrupt:
    case ErrorCode::MalformedDescriptor:
    case ErrorCode::BlockChecksumMismatch:
    case ErrorCode::MalformedPayload:
    case ErrorCode::WalCorrupt:
      return true;
    default:
      return false;
  }
}

}  // namespace minihouse
