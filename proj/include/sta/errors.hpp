#pragma once

#include <stdexcept>
#include <string>

namespace sta {

// Every failure raised by the library derives from Error. The category decides
// the CLI exit code: validation-type problems exit 1, runtime failures exit 2.
enum class ErrorKind {
    parameter,   // out-of-range scalar or option
    dimension,   // shape mismatch
    input,       // malformed or empty input data
    config,      // incompatible artifacts or missing configuration
    degenerate,  // mathematically undefined request (e.g. scaling a zero vector)
    validation,  // user-supplied spec fails a precondition
    integrity,   // hash or format-version mismatch on load
    numeric,     // NaN/Inf produced
    io,          // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define STA_DEFINE_ERROR(Name, Kind)                                                 \
    class Name : public Error {                                                      \
    public:                                                                          \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}     \
    };

STA_DEFINE_ERROR(ParameterError, parameter)
STA_DEFINE_ERROR(DimensionError, dimension)
STA_DEFINE_ERROR(InputError, input)
STA_DEFINE_ERROR(ConfigError, config)
STA_DEFINE_ERROR(DegenerateError, degenerate)
STA_DEFINE_ERROR(ValidationError, validation)
STA_DEFINE_ERROR(IntegrityError, integrity)
STA_DEFINE_ERROR(NumericError, numeric)
STA_DEFINE_ERROR(IoError, io)

#undef STA_DEFINE_ERROR

inline bool is_validation_kind(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parameter:
        case ErrorKind::dimension:
        case ErrorKind::input:
        case ErrorKind::config:
        case ErrorKind::degenerate:
        case ErrorKind::validation:
            return true;
        default:
            return false;
    }
}

}  // namespace sta
