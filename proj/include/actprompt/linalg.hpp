#pragma once

#include <Eigen/Dense>

namespace actprompt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

}  // namespace actprompt
