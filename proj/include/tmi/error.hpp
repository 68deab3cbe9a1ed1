#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmi {

enum class Errc {
  InvalidArgument,
  UnresolvedPulse,
  ClippedSupport,
  GridMismatch,
  EnergyLeak,
  ConservationViolation,
  CollisionIncomplete,
  BasisIncomplete,
  PairingFailure,
  InvalidCoefficient,
  NotBracketed,
  ConfigMismatch,
  ParseError,
  UnknownKey,
  MissingSection,
  Io,
};

constexpr std::string_view name(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnresolvedPulse: return "UnresolvedPulse";
    case Errc::ClippedSupport: return "ClippedSupport";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::EnergyLeak: return "EnergyLeak";
    case Errc::ConservationViolation: return "ConservationViolation";
    case Errc::CollisionIncomplete: return "CollisionIncomplete";
    case Errc::BasisIncomplete: return "BasisIncomplete";
    case Errc::PairingFailure: return "PairingFailure";
    case Errc::InvalidCoefficient: return "InvalidCoefficient";
    case Errc::NotBracketed: return "NotBracketed";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::MissingSection: return "MissingSection";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// CLI exit status: 2 config, 3 numerical, 4 I/O.
constexpr int exit_code(Errc c) {
  switch (c) {
    case Errc::Io: return 4;
    case Errc::EnergyLeak:
    case Errc::ConservationViolation:
    case Errc::BasisIncomplete:
    case Errc::PairingFailure:
    case Errc::NotBracketed:
      return 3;
    default:
      return 2;
  }
}

}  // namespace tmi
