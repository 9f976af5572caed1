#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace prefopt {

// Error categories; the C API maps these 1:1 onto status codes.
enum class ErrorKind {
    InvalidArgument,
    Io,
    Parse,
    Config,
    Training,
    Verify,
    Internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(std::string msg) {
    throw Error(ErrorKind::InvalidArgument, std::move(msg));
}
[[noreturn]] inline void throw_io(std::string msg) { throw Error(ErrorKind::Io, std::move(msg)); }
[[noreturn]] inline void throw_parse(std::string msg) {
    throw Error(ErrorKind::Parse, std::move(msg));
}
[[noreturn]] inline void throw_config(std::string msg) {
    throw Error(ErrorKind::Config, std::move(msg));
}
[[noreturn]] inline void throw_training(std::string msg) {
    throw Error(ErrorKind::Training, std::move(msg));
}

}  // namespace prefopt
