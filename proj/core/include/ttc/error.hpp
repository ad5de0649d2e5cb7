#pragma once

#include <stdexcept>
#include <string>

namespace ttc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a domain invariant (problem files, conversations, params).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Failure while asking a backend for a completion. `retryable()` separates
// transport hiccups from protocol errors that will never succeed on retry.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable, std::string diagnostic = {})
      : Error(what), retryable_(retryable), diagnostic_(std::move(diagnostic)) {}

  bool retryable() const noexcept { return retryable_; }
  const std::string& diagnostic() const noexcept { return diagnostic_; }

 private:
  bool retryable_;
  std::string diagnostic_;
};

class ReplayMissError : public BackendError {
 public:
  explicit ReplayMissError(std::string digest)
      : BackendError("replay miss: no recorded completion for request digest " + digest,
                     /*retryable=*/false, digest),
        digest_(std::move(digest)) {}

  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class DigestMismatchError : public StoreError {
 public:
  DigestMismatchError(std::string stored, std::string requested)
      : StoreError("config digest mismatch: store has " + stored + ", config has " + requested),
        stored_(std::move(stored)),
        requested_(std::move(requested)) {}

  const std::string& stored() const noexcept { return stored_; }
  const std::string& requested() const noexcept { return requested_; }

 private:
  std::string stored_;
  std::string requested_;
};

}  // namespace ttc
