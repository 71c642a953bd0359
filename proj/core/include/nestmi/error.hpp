#ifndef NESTMI_ERROR_HPP
#define NESTMI_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nestmi {

/// Bad inputs: malformed files, broken preconditions, unknown names.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Syntax errors in formulas, transform scripts, and constraint expressions.
/// Carries the byte offset of the first offending character.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Numerical failures: singular systems, failed factorizations, divergence.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nestmi

#endif
