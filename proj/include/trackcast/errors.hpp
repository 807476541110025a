#pragma once

#include <stdexcept>
#include <string>

namespace trackcast {

// Tensor/layer shape contract violations.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Label not present in the active vocabulary, or vocabulary size mismatch.
struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files (CSV header, archive records, checkpoints).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid ModelSpec / TrainSpec / RunConfig.
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated operation precondition (non-uniform timestamps, too-short input).
struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or similar numerical breakdown during training.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace trackcast
