#pragma once

#include <stdexcept>
#include <string>

namespace mktsim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A SoC profile shorter than two nodes cannot be cycle counted.
struct InvalidHorizonError : Error {
  using Error::Error;
};

// Rates would drive the normalized SoC outside [0, 1].
struct InfeasibleProfileError : Error {
  using Error::Error;
};

struct NotPsdError : Error {
  using Error::Error;
};

struct InfeasibleError : Error {
  using Error::Error;
};

// All supply-function bids are zero; the clearing price is undefined.
struct DegenerateClearingError : Error {
  using Error::Error;
};

struct UnsupportedConfigurationError : Error {
  using Error::Error;
};

// A settlement was requested from a dispatch that lacks the required duals.
struct IncompleteSolutionError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, int line) : Error(what), line_number(line) {}
  int line_number = 0;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mktsim
