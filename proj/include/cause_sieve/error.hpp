#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cause_sieve {

enum class Errc {
  // input / configuration problems
  MissingTarget,
  NonFiniteEntry,
  ConstantColumn,
  TooFewRows,
  DuplicateName,
  MalformedCsv,
  TooManyCovariates,
  BadConfig,
  BadParam,
  BadDim,
  Precondition,
  Io,
  // failures of a statistical procedure on otherwise valid input
  RankDeficient,
  BackfitDiverged,
  DomainViolation,
  DegenerateTheta,
  ConstantInput,
  OutOfRange,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::MissingTarget: return "MissingTarget";
    case Errc::NonFiniteEntry: return "NonFiniteEntry";
    case Errc::ConstantColumn: return "ConstantColumn";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::MalformedCsv: return "MalformedCsv";
    case Errc::TooManyCovariates: return "TooManyCovariates";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadParam: return "BadParam";
    case Errc::BadDim: return "BadDim";
    case Errc::Precondition: return "Precondition";
    case Errc::Io: return "Io";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::BackfitDiverged: return "BackfitDiverged";
    case Errc::DomainViolation: return "DomainViolation";
    case Errc::DegenerateTheta: return "DegenerateTheta";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

/// True for errors caused by the caller's input or configuration, as opposed
/// to a statistical procedure failing on valid input.
constexpr bool is_validation_error(Errc c) noexcept {
  switch (c) {
    case Errc::RankDeficient:
    case Errc::BackfitDiverged:
    case Errc::DomainViolation:
    case Errc::DegenerateTheta:
    case Errc::ConstantInput:
    case Errc::OutOfRange:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace cause_sieve
