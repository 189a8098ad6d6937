#pragma once

#include <Eigen/Dense>

namespace ambicodec {

// Signals are stored as [channels x frames]; weight matrices document their
// own layout where it differs.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Arr = Eigen::ArrayXd;
using MatI = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using Eigen::Index;

}  // namespace ambicodec
