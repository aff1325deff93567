#pragma once

#include <stdexcept>
#include <string>

namespace repmart {

// Invalid or inconsistent configuration (bad parameters, missing table rows).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during computation (singular systems, non-finite loss).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank deficiency that survives the ridge jitter in a least-squares solve.
class SingularMatrixError : public NumericalError {
public:
    SingularMatrixError(const std::string& msg, double scale)
        : NumericalError(msg), scale_(scale) {}
    double scale() const { return scale_; }

private:
    double scale_;
};

} // namespace repmart
