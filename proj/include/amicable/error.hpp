#pragma once

#include <stdexcept>
#include <string>

namespace amicable {

// Root of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation on finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing upstream artifact (checkpoint, corpus, perturbation directory).
class MissingInputError : public Error {
 public:
  MissingInputError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Loss became non-finite during perturbation optimization.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : NumericError(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace amicable
