#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace slidewin {

using Index = Eigen::Index;

/// Caller-supplied arrival time. Strictly increasing within one stream.
using Timestamp = std::int64_t;

/// Window flavour. In time mode, instants without data are fed as zero pairs.
enum class WindowMode { sequence, time };

/// One column of X and the matching column of Y, stamped with its arrival time.
template <typename Scalar = double>
struct ColumnPair {
  Eigen::VectorX<Scalar> x;
  Eigen::VectorX<Scalar> y;
  Timestamp t = 0;

  Scalar norm_product() const { return x.norm() * y.norm(); }
};

}  // namespace slidewin
