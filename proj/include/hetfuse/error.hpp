#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetfuse {

enum class ErrorKind {
  ModalityMismatch,
  EmptyBlock,
  LengthMismatch,
  DegenerateInput,
  TooShort,
  WindowTooLarge,
  ShapeMismatch,
  NonFiniteInput,
  NonFiniteLoss,
  BatchTooSmall,
  UnknownLabel,
  NoSharedChannels,
  NoExtraChannels,
  UnknownChannel,
  MissingTruthChannels,
  SchemaMismatch,
  TooFewSamples,
  WidthMismatch,
  InvalidLayout,
  UnsupportedResponse,
  InvalidArgument,
  Io,
  Parse,
  FingerprintMismatch,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it to
// a diagnostic naming the violated invariant.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace hetfuse
