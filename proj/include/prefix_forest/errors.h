// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace prefix_forest {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (input errors -> 2, limit errors -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (bad JSON, duplicate ids, trie violations).
class InputError : public Error {
 public:
  using Error::Error;
};

// A leaf whose root-to-leaf length exceeds the batch capacity.
class InfeasibleLeaf : public InputError {
 public:
  using InputError::InputError;
};

// A traversal or plan that does not fit the tree it is applied to.
class PlanMismatch : public InputError {
 public:
  using InputError::InputError;
};

// Exact enumeration refused because the instance is too large.
class LimitExceeded : public Error {
 public:
  using Error::Error;
};

class ExactModeLimitExceeded : public LimitExceeded {
 public:
  using LimitExceeded::LimitExceeded;
};

class TooManyLeaves : public LimitExceeded {
 public:
  using LimitExceeded::LimitExceeded;
};

class TooManyNodes : public LimitExceeded {
 public:
  using LimitExceeded::LimitExceeded;
};

class BatchTooLarge : public LimitExceeded {
 public:
  using LimitExceeded::LimitExceeded;
};

// Tensor shape or configuration mismatch inside the reference model.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace prefix_forest
