#pragma once

#include <stdexcept>
#include <string>

namespace ecdd {

/// Base of every exception thrown by the library. `kind()` lets front ends
/// map failures onto exit codes without string matching.
class Error : public std::runtime_error {
  public:
    enum class Kind { Config, Input, Usage, Io, Parse, Search, Fit, Lookup };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(Kind::Config, what) {}
};
struct InputError : Error {
    explicit InputError(const std::string& what) : Error(Kind::Input, what) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(Kind::Usage, what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(Kind::Io, what) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(Kind::Parse, what) {}
};
struct SearchError : Error {
    explicit SearchError(const std::string& what) : Error(Kind::Search, what) {}
};
struct FitError : Error {
    explicit FitError(const std::string& what) : Error(Kind::Fit, what) {}
};
struct LookupError : Error {
    explicit LookupError(const std::string& what) : Error(Kind::Lookup, what) {}
};

}  // namespace ecdd
