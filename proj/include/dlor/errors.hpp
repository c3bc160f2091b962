#pragma once

#include <stdexcept>
#include <string>

namespace dlor {

/// Base class for every numerical failure raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Pivot fell below the singularity tolerance during an LU factorization.
class SingularMatrix : public Error {
 public:
  SingularMatrix(const std::string& what, double smallest_pivot)
      : Error(what + " (smallest pivot " + std::to_string(smallest_pivot) + ")"),
        smallest_pivot(smallest_pivot) {}
  double smallest_pivot;
};

class SvdFailure : public Error {
 public:
  using Error::Error;
};

/// No projection vector with pairwise-distinct projections was found.
class ProjectionDegenerate : public Error {
 public:
  using Error::Error;
};

/// Every candidate bias vector produced an evaluation matrix beyond the
/// condition limit.
class EvaluationMatrixSingular : public Error {
 public:
  EvaluationMatrixSingular(const std::string& what, double best_condition)
      : Error(what + " (best condition " + std::to_string(best_condition) + ")"),
        best_condition(best_condition) {}
  double best_condition;
};

/// Zero-sum coefficients need at least two parts.
class BetaDegenerate : public Error {
 public:
  using Error::Error;
};

/// No basis passed the mixed-block condition gate within the retry budget.
class BasisSearchFailed : public Error {
 public:
  BasisSearchFailed(const std::string& what, int block_index, double best_condition)
      : Error(what + " (block " + std::to_string(block_index) + ", best condition " +
              std::to_string(best_condition) + ")"),
        block_index(block_index),
        best_condition(best_condition) {}
  int block_index;
  double best_condition;
};

class PartialProductSingular : public Error {
 public:
  using Error::Error;
};

class NonDifferentiablePoint : public Error {
 public:
  using Error::Error;
};

class NoExpansionPoint : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite.
class Diverged : public Error {
 public:
  Diverged(int epoch)
      : Error("training diverged at epoch " + std::to_string(epoch)), epoch(epoch) {}
  int epoch;
};

/// File-system failures; deliberately not a numerical Error so callers can
/// map them to a different exit status.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dlor
