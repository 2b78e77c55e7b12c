#pragma once

#include <stdexcept>
#include <string>

namespace ipa {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Mode-size or rank mismatch between tensor trains.
struct ShapeError : Error {
    using Error::Error;
};

/// Multi-index or dimension out of range.
struct IndexError : Error {
    using Error::Error;
};

/// Dense materialization refused because the grid exceeds the size cap.
struct SizeCapError : Error {
    using Error::Error;
};

/// A contraction produced a non-finite value.
struct OverflowError : Error {
    using Error::Error;
};

/// maxvol received a (numerically) rank-deficient matrix.
struct DegeneratePivotError : Error {
    using Error::Error;
};

/// The evolved density lost all mass (U vanished on the support).
struct DegenerateDensityError : Error {
    using Error::Error;
};

/// A two-spike split was requested but one side carries no mass.
struct NotDegenerateError : Error {
    using Error::Error;
};

/// Eigenvalue ratio <= 1: no spectral gap, no iteration bound.
struct NoGapError : Error {
    using Error::Error;
};

/// Invalid configuration value (bad grid bounds, beta <= 0, ...).
struct ConfigError : Error {
    using Error::Error;
};

} // namespace ipa
