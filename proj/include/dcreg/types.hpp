#pragma once

#include <Eigen/Dense>

namespace dcreg {

/// Dense real vector; the signal space R^d and measurement space R^m.
using Vec = Eigen::VectorXd;
/// Dense row-major matrix, used for weights and batches (one sample per row).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Planar image stored row-major, row 0 at the top.
struct ImageGrid {
  int rows = 0;
  int cols = 0;
  Vec pixels;

  ImageGrid() = default;
  ImageGrid(int r, int c) : rows(r), cols(c), pixels(Vec::Zero(static_cast<Eigen::Index>(r) * c)) {}
  ImageGrid(int r, int c, Vec px) : rows(r), cols(c), pixels(std::move(px)) {}

  double& at(int r, int c) { return pixels[static_cast<Eigen::Index>(r) * cols + c]; }
  double at(int r, int c) const { return pixels[static_cast<Eigen::Index>(r) * cols + c]; }
};

}  // namespace dcreg
