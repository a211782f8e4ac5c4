#pragma once

#include <stdexcept>
#include <string>

namespace ecgqa {

// Validation failures (CLI exit code 1).
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyIndexError : public std::runtime_error {
 public:
  EmptyIndexError() : std::runtime_error("index is empty") {}
};

class EmptyRetrievalError : public std::runtime_error {
 public:
  EmptyRetrievalError() : std::runtime_error("retrieval returned no reports") {}
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompleteEvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// IO and on-disk format failures (CLI exit code 2).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ecgqa
