#pragma once

#include <stdexcept>
#include <string>

namespace iamcf {

// Distinct error types so the CLI can map each family to its own exit code.

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooFewUsersError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model container problems: bad magic / truncated payload.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Container version we do not speak. Never coerced.
struct VersionMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace iamcf
