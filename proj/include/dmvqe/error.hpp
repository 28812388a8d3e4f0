// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmvqe {

/// A Hamiltonian or grid description that cannot be built.
class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shape, range or precondition violation on an operation argument.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The request would exceed a configured computational cap.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed persisted data. `line()` is 1-based; 0 when not line oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A pipeline stage needs an artifact produced by an earlier stage.
class StagedArtifactError : public std::runtime_error {
 public:
  explicit StagedArtifactError(const std::string& path)
      : std::runtime_error("missing staged artifact: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace dmvqe
