#pragma once

#include <stdexcept>
#include <string>

namespace gi {

/// Malformed input: bad config, bad file, bad parameter ranges.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver or training failure: infeasible LP, NaN loss, singular matrix.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derivation exceeded its step budget or reached a form where no rule applies.
class NonTerminationError : public GrammarError {
 public:
  NonTerminationError(const std::string& what, std::string partial_form)
      : GrammarError(what), partial_form_(std::move(partial_form)) {}
  const std::string& partial_form() const noexcept { return partial_form_; }

 private:
  std::string partial_form_;
};

class NoParseError : public GrammarError {
 public:
  using GrammarError::GrammarError;
};

class UnsupportedGrammarError : public GrammarError {
 public:
  using GrammarError::GrammarError;
};

}  // namespace gi
