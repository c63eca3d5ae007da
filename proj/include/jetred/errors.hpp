#pragma once

#include <stdexcept>
#include <string>

namespace jetred {

// Exit-code families used by the CLI: model errors map to 2, math errors to 3,
// runtime failures (explosion, divergence) to 4.
enum class ErrorFamily { Model, Math, Runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), family_(family), kind_(std::move(kind)) {}

    ErrorFamily family() const { return family_; }
    const std::string& kind() const { return kind_; }

private:
    ErrorFamily family_;
    std::string kind_;
};

class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t pos)
        : Error(ErrorFamily::Model, "SyntaxError", what + " at position " + std::to_string(pos)),
          pos_(pos) {}
    std::size_t position() const { return pos_; }

private:
    std::size_t pos_;
};

inline Error model_error(const std::string& kind, const std::string& what) {
    return Error(ErrorFamily::Model, kind, what);
}
inline Error math_error(const std::string& kind, const std::string& what) {
    return Error(ErrorFamily::Math, kind, what);
}
inline Error runtime_failure(const std::string& kind, const std::string& what) {
    return Error(ErrorFamily::Runtime, kind, what);
}

}  // namespace jetred
