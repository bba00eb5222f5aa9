#pragma once

#include <stdexcept>
#include <string>

namespace rcpam {

/// Invalid configuration or arguments. The CLI maps this to exit code 1.
class validation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Structured-text parse failure with the 1-based line of the offending input.
class config_parse_error : public validation_error {
public:
    config_parse_error(const std::string& what, std::size_t line)
        : validation_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Normal equations could not be factorized (e.g. lambda = 0 on rank-deficient states).
class singular_system : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A BER curve never crosses the requested threshold.
class not_bracketed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The curve crosses the threshold, but only on non-decreasing segments.
class non_monotone : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rcpam
