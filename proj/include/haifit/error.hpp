#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace haifit {

enum class ErrorKind {
  Shape,
  ChannelCount,
  Schedule,
  Sequence,
  Protocol,
  Growth,
  Domain,
  Configuration,
  SampleCount,
  Pairing,
  Numerical,
  Io,
  Format,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::ChannelCount: return "channel_count";
    case ErrorKind::Schedule: return "schedule";
    case ErrorKind::Sequence: return "sequence";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Growth: return "growth";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::SampleCount: return "sample_count";
    case ErrorKind::Pairing: return "pairing";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace haifit
