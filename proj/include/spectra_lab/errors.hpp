#pragma once

#include <stdexcept>
#include <string>

namespace spectra_lab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range value, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to converge, or a computed result failed its
/// internal consistency check.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The optimization problem has no feasible point.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Lanczos found two lowest eigenvalues closer than the degeneracy threshold.
class DegenerateGroundState : public NumericalError {
public:
    DegenerateGroundState(double energy, double gap)
        : NumericalError("degenerate ground state: E1 = " + std::to_string(energy) +
                         ", gap = " + std::to_string(gap)),
          energy_(energy), gap_(gap) {}

    double energy() const noexcept { return energy_; }
    double gap() const noexcept { return gap_; }

private:
    double energy_;
    double gap_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace spectra_lab
