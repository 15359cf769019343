// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace caicl {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InfeasibleConfig : public Error {
public:
    using Error::Error;
};

class UnknownLevel : public Error {
public:
    using Error::Error;
};

class UnknownObject : public Error {
public:
    using Error::Error;
};

class OutOfBounds : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NoCandidates : public Error {
public:
    using Error::Error;
};

class NotEnoughCandidates : public Error {
public:
    using Error::Error;
};

class InvalidReportSerials : public Error {
public:
    using Error::Error;
};

class NotAFailure : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

/// A structured response lacked required keys or carried invalid values.
class ParseError : public Error {
public:
    explicit ParseError(std::vector<std::string> missing_keys, const std::string& detail = {})
        : Error(make_message(missing_keys, detail)), missing_keys_(std::move(missing_keys))
    {
    }

    const std::vector<std::string>& missing_keys() const noexcept { return missing_keys_; }

private:
    static std::string make_message(const std::vector<std::string>& keys, const std::string& detail)
    {
        std::string msg = "parse error";
        if (!keys.empty()) {
            msg += ": missing or invalid keys [";
            for (std::size_t i = 0; i < keys.size(); ++i) {
                if (i) msg += ", ";
                msg += keys[i];
            }
            msg += "]";
        }
        if (!detail.empty()) msg += " (" + detail + ")";
        return msg;
    }

    std::vector<std::string> missing_keys_;
};

class OutOfRangeSerial : public Error {
public:
    OutOfRangeSerial(int serial, int candidate_count)
        : Error("best_match " + std::to_string(serial) + " outside 1.." + std::to_string(candidate_count)),
          serial_(serial)
    {
    }
    int serial() const noexcept { return serial_; }

private:
    int serial_;
};

enum class BackendErrorKind { Transport, RateLimited, BadResponse, Timeout };

inline const char* to_string(BackendErrorKind k)
{
    switch (k) {
    case BackendErrorKind::Transport: return "Transport";
    case BackendErrorKind::RateLimited: return "RateLimited";
    case BackendErrorKind::BadResponse: return "BadResponse";
    case BackendErrorKind::Timeout: return "Timeout";
    }
    return "Transport";
}

/// A completion call failed; `kind()` tells the harness whether retrying makes sense.
class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }
    BackendErrorKind kind() const noexcept { return kind_; }

private:
    BackendErrorKind kind_;
};

/// Backend could not be constructed (missing key, malformed URL).
class BackendSetupError : public Error {
public:
    using Error::Error;
};

/// Terminal matcher failure. Carries whether the root cause was the backend or parsing.
class MatchFailed : public Error {
public:
    enum class Cause { Backend, Parse };

    MatchFailed(Cause cause, const std::string& what) : Error("match failed: " + what), cause_(cause) {}
    Cause cause() const noexcept { return cause_; }

private:
    Cause cause_;
};

} // namespace caicl
