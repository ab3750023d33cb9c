#include "hetfuse/error.hpp"

namespace hetfuse {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ModalityMismatch: return "ModalityMismatch";
    case ErrorKind::EmptyBlock: return "EmptyBlock";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::WindowTooLarge: return "WindowTooLarge";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::NoSharedChannels: return "NoSharedChannels";
    case ErrorKind::NoExtraChannels: return "NoExtraChannels";
    case ErrorKind::UnknownChannel: return "UnknownChannel";
    case ErrorKind::MissingTruthChannels: return "MissingTruthChannels";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::InvalidLayout: return "InvalidLayout";
    case ErrorKind::UnsupportedResponse: return "UnsupportedResponse";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace hetfuse
