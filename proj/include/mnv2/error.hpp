#pragma once

#include <stdexcept>
#include <string>

namespace mnv2 {

// Root of every error the library throws. The CLI maps these to a one-line
// diagnostic and a nonzero exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class NonFiniteError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class MissingTensorError : public Error {
public:
  explicit MissingTensorError(const std::string& name)
      : Error("missing tensor: " + name), name_(name) {}
  const std::string& name() const { return name_; }

private:
  std::string name_;
};

class DatasetError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace mnv2
