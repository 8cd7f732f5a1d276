#include "fcqc/errors.hpp"

namespace fcqc {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedStream: return "MalformedStream";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::EncoderUnavailable: return "EncoderUnavailable";
    case Errc::InvalidQuality: return "InvalidQuality";
    case Errc::InvalidDimensions: return "InvalidDimensions";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::EmptySourceList: return "EmptySourceList";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::MissingReference: return "MissingReference";
    case Errc::EmptyManifest: return "EmptyManifest";
    case Errc::DegenerateRange: return "DegenerateRange";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IncompatibleArtifactVersion: return "IncompatibleArtifactVersion";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::DegenerateDistribution: return "DegenerateDistribution";
    case Errc::UndefinedF1: return "UndefinedF1";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::UnknownSampleId: return "UnknownSampleId";
    case Errc::EmptyComparisons: return "EmptyComparisons";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace fcqc
