#pragma once

#include <stdexcept>
#include <string>

namespace ttfs {

// Base of every error raised by the library. `kind()` is the stable,
// machine-readable tag used in the CLI's JSON error output.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define TTFS_DEFINE_ERROR(Name, tag)                              \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* kind() const noexcept override { return tag; }    \
  };

TTFS_DEFINE_ERROR(DimensionError, "dimension")
TTFS_DEFINE_ERROR(ConfigError, "config")
TTFS_DEFINE_ERROR(StateError, "state")
TTFS_DEFINE_ERROR(NumericError, "numeric")
TTFS_DEFINE_ERROR(IndexError, "index")
TTFS_DEFINE_ERROR(ProtocolError, "protocol")
TTFS_DEFINE_ERROR(FormatError, "format")
TTFS_DEFINE_ERROR(ParseError, "parse")
TTFS_DEFINE_ERROR(VersionError, "version")
TTFS_DEFINE_ERROR(ChecksumError, "checksum")
TTFS_DEFINE_ERROR(IoError, "io")

#undef TTFS_DEFINE_ERROR

}  // namespace ttfs
