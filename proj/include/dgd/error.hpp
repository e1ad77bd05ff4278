#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dgd {

enum class Errc {
  // data
  UnsupportedFormat,
  TruncatedFile,
  BadMagic,
  LengthMismatch,
  MissingColumn,
  NonIntegerId,
  DuplicatePath,
  BadLabel,
  SelfPair,
  InvalidConfig,
  Io,
  // extractor
  KernelTooLarge,
  IndivisibleExtent,
  WrongInputSize,
  // descriptor
  NegativeActivation,
  BadExponent,
  ZeroVector,
  DimensionMismatch,
  // objective
  NoPositive,
  BadTemperature,
  LabelOutOfRange,
  // trainer
  TooFewIdentities,
  OutOfRange,
  ShapeMismatch,
  UnknownVersion,
  MissingTensor,
  // augment
  BadLength,
  // evalfuse
  MissingEmbedding,
  OneClassOnly,
  KTooLarge,
  OrderMismatch,
  ViewCountMismatch,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::BadMagic: return "BadMagic";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::NonIntegerId: return "NonIntegerId";
    case Errc::DuplicatePath: return "DuplicatePath";
    case Errc::BadLabel: return "BadLabel";
    case Errc::SelfPair: return "SelfPair";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
    case Errc::KernelTooLarge: return "KernelTooLarge";
    case Errc::IndivisibleExtent: return "IndivisibleExtent";
    case Errc::WrongInputSize: return "WrongInputSize";
    case Errc::NegativeActivation: return "NegativeActivation";
    case Errc::BadExponent: return "BadExponent";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoPositive: return "NoPositive";
    case Errc::BadTemperature: return "BadTemperature";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::TooFewIdentities: return "TooFewIdentities";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnknownVersion: return "UnknownVersion";
    case Errc::MissingTensor: return "MissingTensor";
    case Errc::BadLength: return "BadLength";
    case Errc::MissingEmbedding: return "MissingEmbedding";
    case Errc::OneClassOnly: return "OneClassOnly";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::OrderMismatch: return "OrderMismatch";
    case Errc::ViewCountMismatch: return "ViewCountMismatch";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace dgd
