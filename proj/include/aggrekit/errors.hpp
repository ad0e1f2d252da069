#pragma once

#include <stdexcept>
#include <string>

namespace aggrekit {

enum class ErrorKind { config, numerical, non_identifiable, io };

// Every failure the library raises on purpose. The CLI maps kind to an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string stage, const std::string& what)
        : std::runtime_error(stage.empty() ? what : stage + ": " + what),
          kind_(kind), stage_(std::move(stage)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& stage() const { return stage_; }

    int exit_code() const {
        switch (kind_) {
        case ErrorKind::config: return 2;
        case ErrorKind::numerical: return 3;
        case ErrorKind::non_identifiable: return 4;
        case ErrorKind::io: return 2;
        }
        return 1;
    }

private:
    ErrorKind kind_;
    std::string stage_;
};

inline Error config_error(const std::string& stage, const std::string& what) {
    return Error(ErrorKind::config, stage, what);
}
inline Error numerical_error(const std::string& stage, const std::string& what) {
    return Error(ErrorKind::numerical, stage, what);
}
inline Error identifiability_error(const std::string& stage, const std::string& what) {
    return Error(ErrorKind::non_identifiable, stage, what);
}

} // namespace aggrekit
