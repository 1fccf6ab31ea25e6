#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dualsrc {

// Precondition or shape violation in caller-supplied data.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A non-finite value appeared inside a computation.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t node)
      : std::runtime_error(what), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

// Malformed input file. `offset` is the byte position where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualsrc
