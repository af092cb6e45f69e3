#pragma once

#include <stdexcept>
#include <string>

namespace outpaint {

/// Malformed argument: bad shape, range, or configuration value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A segmenter could not produce a layout for its input.
class SegmentationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weights on disk were produced for a different network spec or config.
class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint file missing or unreadable.
class CheckpointNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset manifest or one of the files it references is missing.
class DatasetNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a NaN or infinite loss; the message carries diagnostics.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical routine failed to converge (matrix square root in FID).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace outpaint
