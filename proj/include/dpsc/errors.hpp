#pragma once

#include <stdexcept>
#include <string>

namespace dpsc {

// Non-finite value produced where a finite one is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Noise calibration could not reach the requested budget.
class CalibrationError : public std::runtime_error {
public:
    CalibrationError(const std::string& what, double lo, double hi)
        : std::runtime_error(what), sigma_lo(lo), sigma_hi(hi) {}
    double sigma_lo;
    double sigma_hi;
};

// File could not be opened or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed cell or record in an input file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input contained no data rows.
class EmptyDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dpsc
