#pragma once

#include <stdexcept>
#include <string>

namespace aquilt {

// Root of every error the library throws. Callers that only want to report
// and continue catch this; tests match the concrete subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Config validation failure carrying the JSON path of the offending field.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string field_path, const std::string& what)
      : ConfigError(field_path + ": " + what), field_path_(std::move(field_path)) {}
  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  RenderError(std::string placeholder, const std::string& what)
      : Error(what), placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const noexcept { return placeholder_; }

 private:
  std::string placeholder_;
};

// Structured-output failures. ParseError: no JSON object could be located.
class ParseError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was invoked before the stage that produces its input.
class DependencyError : public Error {
 public:
  DependencyError(std::string stage, const std::string& what)
      : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace aquilt
