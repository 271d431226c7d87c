#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace brw {

// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// laws
class InvalidLaw : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class NoRoot : public Error { public: using Error::Error; };
class Degenerate : public Error { public: using Error::Error; };

// engine
class InvalidConfig : public Error { public: using Error::Error; };
class PopulationOverflow : public Error { public: using Error::Error; };
class EmptyPool : public Error { public: using Error::Error; };

// stats
class EmptyInput : public Error { public: using Error::Error; };
class NonpositiveZ : public Error { public: using Error::Error; };
class NonpositiveSigma2 : public Error { public: using Error::Error; };
class InsufficientTail : public Error { public: using Error::Error; };
class TooFewSurvivors : public Error { public: using Error::Error; };

class ReplicaError : public Error {
 public:
  ReplicaError(std::uint64_t index, const std::string& what)
      : Error("replica " + std::to_string(index) + ": " + what), index_(index) {}
  [[nodiscard]] std::uint64_t index() const noexcept { return index_; }

 private:
  std::uint64_t index_;
};

// cli
class IoError : public Error { public: using Error::Error; };

}  // namespace brw
