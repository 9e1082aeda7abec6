#pragma once

#include <stdexcept>
#include <string>

namespace implab {

// Exit-code mapping in the CLI: ConfigError -> 1, NumericalError -> 2,
// CacheCorruption -> 3. GeometryError and PreconditionError count as config.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GeometryError : ConfigError {
  using ConfigError::ConfigError;
};

struct PreconditionError : ConfigError {
  using ConfigError::ConfigError;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct CacheCorruption : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace implab
