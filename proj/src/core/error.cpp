#include "salfeat/error.hpp"

namespace salfeat {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Format: return "format";
    case ErrorKind::InvalidDimensions: return "invalid-dimensions";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
    case ErrorKind::Index: return "index";
    case ErrorKind::Channel: return "channel";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Model: return "model";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::TooSmall: return "too-small";
    case ErrorKind::NoFixation: return "no-fixation";
    case ErrorKind::DegenerateMap: return "degenerate-map";
    case ErrorKind::UndefinedNegative: return "undefined-negative";
    case ErrorKind::EmptyNegative: return "empty-negative";
    case ErrorKind::Layout: return "layout";
    case ErrorKind::DegenerateLabel: return "degenerate-label";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Fold: return "fold";
    case ErrorKind::Leakage: return "leakage";
  }
  return "unknown";
}

bool Error::is_configuration_error() const noexcept {
  switch (kind_) {
    case ErrorKind::Configuration:
    case ErrorKind::Protocol:
    case ErrorKind::Layout:
      return true;
    default:
      return false;
  }
}

}  // namespace salfeat
