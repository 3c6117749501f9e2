#pragma once

#include <Eigen/Dense>

namespace marginlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Sample-major storage: row i is the i-th input point.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace marginlab
