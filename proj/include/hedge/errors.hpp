#pragma once

#include <stdexcept>
#include <string>

namespace hedge {

/// A simulated state, loss, or gradient became NaN or infinite. Reports render
/// the affected row as "NaN".
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A leading-order rate was requested beyond the solved abscissa range.
class ExtrapolationBeyondGrid : public std::out_of_range {
public:
    ExtrapolationBeyondGrid(double requested, double limit);

    double requested() const noexcept { return requested_; }
    double limit() const noexcept { return limit_; }

private:
    double requested_;
    double limit_;
};

/// The initial slope bracket of the shooting method does not straddle the solution.
class BracketFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hedge
