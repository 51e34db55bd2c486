#pragma once

#include <stdexcept>
#include <string>

namespace satpred {

/// Base for every error the library raises.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration; the CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed input file (bad JSON, wrong magic, truncation...).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Data-dependent failure: dimension mismatch, empty corpus, too many dropped rows.
class DataError : public Error {
public:
  using Error::Error;
};

}  // namespace satpred
