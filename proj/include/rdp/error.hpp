#pragma once

#include <stdexcept>
#include <string>

namespace rdp {

/// Thrown when an operation's precondition does not hold for the supplied input.
class RejectedInput : public std::invalid_argument {
public:
  explicit RejectedInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a named entity (session, label, checkpoint key) does not exist.
class NotFound : public std::runtime_error {
public:
  explicit NotFound(const std::string& what) : std::runtime_error(what) {}
};

#define RDP_REQUIRE(cond, msg)                 \
  do {                                         \
    if (!(cond)) throw ::rdp::RejectedInput(msg); \
  } while (0)

}  // namespace rdp
