#pragma once

#include <stdexcept>
#include <string>

#include "bast/real.hpp"

BAST_NAMESPACE_BEGIN

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (waveforms, spectrograms, targets).
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. a second backward over a consumed graph.
class ContractError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class StatisticsError : public Error {
 public:
  using Error::Error;
};

// Non-finite gradient reaching the optimizer.
class UpdateError : public Error {
 public:
  using Error::Error;
};

// Failures of a training or evaluation run (I/O, missing checkpoints, NaN loss).
class RunError : public Error {
 public:
  using Error::Error;
};

BAST_NAMESPACE_END
