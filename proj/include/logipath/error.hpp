#pragma once

#include <stdexcept>
#include <string>

namespace logipath {

/// Input that violates a documented precondition or file format.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rewrite rule was applied to an atom outside its domain.
class RuleNotApplicable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The truth-table oracle was asked about more variables than it enumerates.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace logipath
