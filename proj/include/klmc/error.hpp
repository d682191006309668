#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace klmc {

/// Invalid argument or inconsistent parameter set.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value produced during a step.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::uint64_t step, std::vector<double> x,
                 std::vector<double> v)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
          step_(step), x_(std::move(x)), v_(std::move(v)) {}

    std::uint64_t step() const noexcept { return step_; }
    const std::vector<double>& x() const noexcept { return x_; }
    const std::vector<double>& v() const noexcept { return v_; }

private:
    std::uint64_t step_;
    std::vector<double> x_;
    std::vector<double> v_;
};

/// Deterministic part of a linear recursion is not contractive.
class StabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unknown configuration entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// A proposition's hypotheses are not met by the supplied parameters.
class HypothesisError : public std::runtime_error {
public:
    explicit HypothesisError(const std::string& clause)
        : std::runtime_error("hypothesis violated: " + clause), clause_(clause) {}
    const std::string& clause() const noexcept { return clause_; }

private:
    std::string clause_;
};

}  // namespace klmc
