#pragma once

#include <stdexcept>
#include <string>

namespace salaad {

// Numerical failure in a matrix kernel (e.g. SVD non-convergence).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Operation called on state that is not ready for it (e.g. controller
// before the first adaptation sweep, surrogate eval on a dense-only model).
class StateError : public std::logic_error {
public:
    explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Invalid or inconsistent input data (shape mismatch, bad token ids).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Requested removal budget cannot be met.
class BudgetError : public std::invalid_argument {
public:
    explicit BudgetError(const std::string& what) : std::invalid_argument(what) {}
};

// Loss or gradients turned non-finite during training.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file is malformed, truncated or of the wrong version.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration file or configuration value.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace salaad
