#pragma once

#include <Eigen/Dense>

namespace graftcert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace graftcert
