#pragma once

#include "mmpt/common.hpp"

namespace mmpt {

// Uniform grid on [0, 1] with n_steps panels and n_steps + 1 nodes.
class TimeGrid {
 public:
  explicit TimeGrid(Index n_steps) : n_steps_(n_steps) {
    require(n_steps >= 1, "TimeGrid: need at least one step");
  }

  Index n_steps() const { return n_steps_; }
  Index n_nodes() const { return n_steps_ + 1; }
  double dt() const { return 1.0 / static_cast<double>(n_steps_); }
  double node(Index k) const { return static_cast<double>(k) / static_cast<double>(n_steps_); }

  bool operator==(const TimeGrid& other) const { return n_steps_ == other.n_steps_; }

 private:
  Index n_steps_;
};

}  // namespace mmpt
