#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace recam {

// Shape or size disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Violated operation precondition (non-scalar loss, empty chunk list, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Token id outside the vocabulary.
struct VocabError : std::out_of_range {
  VocabError(const std::string& msg, int64_t id)
      : std::out_of_range(msg), offending_id(id) {}
  int64_t offending_id;
};

// Bad configuration value (even window, unknown kernel id, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Out-of-range index into a sequence or pattern.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Malformed input file; carries the 1-based line number when known.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int64_t line = -1)
      : std::runtime_error(msg), line_number(line) {}
  int64_t line_number;
};

// A sample that violates the data-format invariants.
struct SampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted because the loss stopped being finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, int64_t step)
      : std::runtime_error(msg), step(step) {}
  int64_t step;
};

}  // namespace recam
