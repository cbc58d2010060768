#ifndef SSU_ERRORS_HPP_
#define SSU_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ssu {

// Error categories map 1:1 onto CLI exit codes (usage 2, ingestion 3,
// integrity 4, io 5).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

// Invalid layer/op/arch parameters. A subclass of UsageError so the CLI
// reports it as a usage failure.
struct ConfigError : UsageError {
  using UsageError::UsageError;
};

struct IngestionError : Error {
  using Error::Error;
};

struct IntegrityError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace ssu

#endif  // SSU_ERRORS_HPP_
