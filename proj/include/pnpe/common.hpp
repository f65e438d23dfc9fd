#pragma once

#include <stdexcept>
#include <string>

namespace pnpe {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unrecognized file contents (bad header, bad magic, truncation).
struct FormatError : Error {
  using Error::Error;
};

// Recognized but unsupported contents (e.g. 24-bit WAV, unknown weight version).
struct UnsupportedError : Error {
  using Error::Error;
};

// Filesystem-level failures: missing file, unreadable, unwritable.
struct IoError : Error {
  using Error::Error;
};

// Precondition violation on an API argument.
struct InvalidArgument : Error {
  using Error::Error;
};

}  // namespace pnpe
