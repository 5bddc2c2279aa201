#pragma once

#include <stdexcept>
#include <string>

namespace mabopt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The model was evaluated at a point where it is undefined (V <= 0, non-finite values).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Integration could not reach the requested end time.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double time)
        : Error(what + " (t = " + std::to_string(time) + " min)"), time_(time) {}

    double time() const noexcept { return time_; }

protected:
    struct Preformatted {};
    IntegrationError(Preformatted, const std::string& what, double time) : Error(what), time_(time) {}

private:
    double time_;
};

/// Invalid user-supplied configuration or schedule.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace mabopt
