#pragma once

#include <stdexcept>
#include <string>

namespace regretel {

/// Malformed input: wrong dimensions, out-of-range indices, invalid distributions.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to produce a trustworthy answer (iteration cap,
/// singular system). Never raised for a well-posed problem that merely has
/// no solution; those are reported through status values.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A reward-set update would leave no feasible reward.
class InconsistencyError : public std::runtime_error {
public:
    InconsistencyError(const std::string& msg, int constraint)
        : std::runtime_error(msg), constraint_(constraint) {}

    /// Index of the linear constraint found to conflict, or -1 when the box
    /// bounds alone are contradictory.
    int constraint() const { return constraint_; }

private:
    int constraint_;
};

/// Query selection found no reward parameter with a gap worth asking about.
class NoInformativeQuery : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace regretel
