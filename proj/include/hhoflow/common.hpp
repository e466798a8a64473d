#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace hhoflow {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned rectangle [xmin,xmax] x [ymin,ymax].
struct Rect {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// Portable uniform double in [0,1) from a 64-bit generator output.
/// std::uniform_real_distribution is implementation-defined; this is not.
inline double uniform01(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

int thread_budget();

/// Runs fn(i) for i in [0, n). Each index owns its output slot, so results
/// are independent of the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace hhoflow
