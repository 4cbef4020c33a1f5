#pragma once

#include <stdexcept>
#include <string>

namespace tokprep {

// Base for every error raised by the library. Callers that do not care about
// the category catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid model, TP or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed files (vocab, weights, datasets, dumps, templates).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Token ids that cannot be decoded or embedded.
class TokenError : public Error {
 public:
  using Error::Error;
};

// Inputs outside an operation's mathematical domain (fully masked softmax
// row, zero-norm cosine, constant Spearman input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace tokprep
