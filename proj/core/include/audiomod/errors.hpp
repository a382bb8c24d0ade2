#pragma once

#include <stdexcept>
#include <string>

namespace audiomod {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kConfig,
  kData,
  kNumeric,
  kShape,
  kFormat,
  kUnsupported,
  kTooShort,
  kIo,
  kContract,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define AUDIOMOD_DEFINE_ERROR(Name, Kind) \
  class Name : public Error {             \
   public:                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

AUDIOMOD_DEFINE_ERROR(ConfigError, kConfig)
AUDIOMOD_DEFINE_ERROR(DataError, kData)
AUDIOMOD_DEFINE_ERROR(NumericError, kNumeric)
AUDIOMOD_DEFINE_ERROR(ShapeError, kShape)
AUDIOMOD_DEFINE_ERROR(FormatError, kFormat)
AUDIOMOD_DEFINE_ERROR(UnsupportedError, kUnsupported)
AUDIOMOD_DEFINE_ERROR(TooShortError, kTooShort)
AUDIOMOD_DEFINE_ERROR(IoError, kIo)
AUDIOMOD_DEFINE_ERROR(ContractError, kContract)

#undef AUDIOMOD_DEFINE_ERROR

// Key-carrying config error so callers can report which setting was rejected.
class ConfigKeyError : public ConfigError {
 public:
  ConfigKeyError(std::string key, const std::string& what)
      : ConfigError(key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace audiomod
