#pragma once

#include <stdexcept>
#include <string>

namespace filterattack {

// Base of every error raised by the library. The CLI maps these to exit
// code 2; ArgumentError raised while parsing user input maps to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed (missing, unwritable, truncated).
class IoError : public Error {
 public:
  using Error::Error;
};

// A dataset file is not a well-formed CIFAR-10 binary batch.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// A weights file is well-formed on disk but inconsistent with the network.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

// Text input (chain files, run configuration) could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace filterattack
