#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcqc {

enum class Errc {
  MalformedStream,
  UnsupportedFormat,
  EncoderUnavailable,
  InvalidQuality,
  InvalidDimensions,
  DegenerateConfiguration,
  EmptySourceList,
  DimensionMismatch,
  ImageTooSmall,
  MissingReference,
  EmptyManifest,
  DegenerateRange,
  EmptyInput,
  LabelOutOfRange,
  ShapeMismatch,
  IncompatibleArtifactVersion,
  EmptyGrid,
  DegenerateDistribution,
  UndefinedF1,
  DegenerateInput,
  UnknownSampleId,
  EmptyComparisons,
  InvalidArgument,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the named codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fcqc
