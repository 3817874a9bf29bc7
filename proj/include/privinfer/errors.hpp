#pragma once

#include <stdexcept>
#include <string>

namespace privinfer {

// Fixed-point value does not fit the ring.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

// A ciphertext's tracked noise bound reached delta/2.
class NoiseBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Peer closed the connection, socket failure, or the run was aborted.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed frame or a message arriving with an unexpected tag.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PRIVINFER_ENFORCE(cond, msg)                                        \
  do {                                                                   \
    if (!(cond)) {                                                       \
      throw std::invalid_argument(std::string(__func__) + ": " + (msg)); \
    }                                                                    \
  } while (0)

}  // namespace privinfer
