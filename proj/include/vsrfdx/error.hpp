#pragma once

#include <stdexcept>
#include <string>

namespace vsrfdx {

enum class ErrorKind {
    Config,
    NonFinite,
    EmptyDataset,
    TraceTooShort,
    UncodableFaultSet,
    MalformedFile,
    VersionMismatch,
    DimensionMismatch,
    Diverged,
    RegimeMismatch,
    Io,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` lets callers (the CLI in
// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::TraceTooShort: return "TraceTooShort";
    case ErrorKind::UncodableFaultSet: return "UncodableFaultSet";
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::RegimeMismatch: return "RegimeMismatch";
    case ErrorKind::Io: return "IoError";
    }
    return "Error";
}

} // namespace vsrfdx
