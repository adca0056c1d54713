#pragma once

#include <stdexcept>
#include <string>

namespace ddm2 {

enum class ErrorKind {
  // data / IO
  UnsupportedFormat,
  CorruptHeader,
  NonFiniteData,
  AlreadyNormalized,
  TooFewVolumes,
  ShapeMismatch,
  // model / checkpoint
  MissingCondition,
  UnexpectedCondition,
  HashMismatch,
  SpecMismatch,
  // training / sampling
  DivergedLoss,
  StateOutOfRange,
  NonFiniteState,
  ZeroSigma,
  AlreadyCalibrated,
  EmptySample,
  EmptyTrace,
  // metrics
  DegenerateBackground,
  MaskMismatch,
  // orchestration
  ConfigInvalid,
  StageFailed,
  LockHeld,
  Internal,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::NonFiniteData: return "NonFiniteData";
    case ErrorKind::AlreadyNormalized: return "AlreadyNormalized";
    case ErrorKind::TooFewVolumes: return "TooFewVolumes";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingCondition: return "MissingCondition";
    case ErrorKind::UnexpectedCondition: return "UnexpectedCondition";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::SpecMismatch: return "SpecMismatch";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::StateOutOfRange: return "StateOutOfRange";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::ZeroSigma: return "ZeroSigma";
    case ErrorKind::AlreadyCalibrated: return "AlreadyCalibrated";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::DegenerateBackground: return "DegenerateBackground";
    case ErrorKind::MaskMismatch: return "MaskMismatch";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::StageFailed: return "StageFailed";
    case ErrorKind::LockHeld: return "LockHeld";
    case ErrorKind::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace ddm2
