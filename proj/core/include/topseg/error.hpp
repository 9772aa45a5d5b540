#pragma once

#include <stdexcept>
#include <string>

namespace topseg {

// Base for everything the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes, reported with both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Bad or missing on-disk data: files, manifests, validation failures.
// The CLI maps these to exit code 2.
struct DataError : Error {
  using Error::Error;
};

// Bad invocation: unknown flags, incompatible options. Exit code 1.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace topseg
