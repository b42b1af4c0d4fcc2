#pragma once

#include <stdexcept>
#include <string>

namespace mpa {

// Base for every recoverable failure raised by the library. The CLI maps
// the concrete type to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

class MissingPronunciation : public Error {
 public:
  explicit MissingPronunciation(std::string word)
      : Error("no pronunciation for word '" + word + "'"), word_(std::move(word)) {}
  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic, unsupported version or malformed record in a file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpa
