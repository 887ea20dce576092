#pragma once

#include <Eigen/Dense>

namespace hwobs {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using VecXi = Eigen::VectorXi;

} // namespace hwobs
