#pragma once

#include <stdexcept>
#include <string>

namespace actprompt {

// Bad input data, bad config, bad file format. CLI maps these to exit 2.
class InputError : public std::runtime_error {
public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime/numeric failures (non-finite loss, diverged training). Exit 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace actprompt
