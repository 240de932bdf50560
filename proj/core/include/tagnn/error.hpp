#pragma once

#include <stdexcept>
#include <string>

namespace tagnn {

enum class ErrorKind {
  dimension,     // operand shapes incompatible
  contract,      // precondition violated by the caller
  config,        // bad configuration value or unknown key
  numeric,       // non-finite value produced
  data,          // unreadable or malformed input data
  checkpoint,    // checkpoint / vocabulary integrity failure
  unknown_item,  // inference input references an item outside the vocabulary
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace tagnn
