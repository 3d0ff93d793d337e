#pragma once

#include <stdexcept>
#include <string>

namespace rehab {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
  using Error::Error;
};

// Steps or sets requested out of order, or after an episode finished.
class SequencingError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

class ShapeError : public Error {
  using Error::Error;
};

// Non-finite logits, losses or parameters during learning.
class TrainingFault : public Error {
  using Error::Error;
};

class InputError : public Error {
  using Error::Error;
};

class ValidationError : public Error {
  using Error::Error;
};

class FileError : public Error {
  using Error::Error;
};

class VersionError : public Error {
  using Error::Error;
};

}  // namespace rehab
