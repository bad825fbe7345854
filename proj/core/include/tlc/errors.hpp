#pragma once

#include <stdexcept>
#include <string>

namespace tlc {

// Base for everything the library throws on purpose. The CLI maps these to
// exit codes; anything else is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigInvalid : public Error {
 public:
  using Error::Error;
};

class ActionLengthMismatch : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class MissingCache : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class UnstableSchedule : public Error {
 public:
  using Error::Error;
};

class CheckpointIncompatible : public Error {
 public:
  using Error::Error;
};

}  // namespace tlc
