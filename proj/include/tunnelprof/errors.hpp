#pragma once

#include <stdexcept>
#include <string>

namespace tunnelprof {

/// Base class for all tunnelprof errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedAddressError : public Error {
 public:
  using Error::Error;
};

class MalformedCellError : public Error {
 public:
  using Error::Error;
};

class OversizeError : public Error {
 public:
  using Error::Error;
};

/// AEAD tag mismatch, nonce replay, or corrupted ciphertext.
class AuthenticationError : public Error {
 public:
  using Error::Error;
};

/// peel_layer applied to a payload with no layers left.
class NoLayerError : public Error {
 public:
  using Error::Error;
};

class CircuitStateError : public Error {
 public:
  using Error::Error;
};

/// Circuit build failed; carries the 1-based index of the hop that did not answer.
class BuildError : public Error {
 public:
  BuildError(int failed_hop, const std::string& what)
      : Error(what), failed_hop_(failed_hop) {}
  int failed_hop() const { return failed_hop_; }

 private:
  int failed_hop_;
};

class BindError : public Error {
 public:
  using Error::Error;
};

class ProfilerStateError : public Error {
 public:
  using Error::Error;
};

class UndefinedGoodputError : public Error {
 public:
  using Error::Error;
};

class UndefinedEstimateError : public Error {
 public:
  using Error::Error;
};

/// Report generation asked for a (hop, role) cell the result does not contain.
class ReportError : public Error {
 public:
  using Error::Error;
};

class ScenarioParseError : public Error {
 public:
  ScenarioParseError(int line, int column, const std::string& what)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tunnelprof
