#pragma once

#include "momentfield/errors.hpp"

namespace momentfield {

/// Uniform grid 0 = t_0 < t_1 < ... < t_N = T with spacing T/N.
class TimeGrid {
public:
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0)) throw DomainError("time grid horizon must be positive");
    if (steps < 1) throw DomainError("time grid needs at least one step");
  }

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int nodes() const { return steps_ + 1; }
  double dt() const { return horizon_ / steps_; }
  double node(int i) const { return (i == steps_) ? horizon_ : i * horizon_ / steps_; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
  }

private:
  double horizon_;
  int steps_;
};

}  // namespace momentfield
