#pragma once

#include <Eigen/Dense>

#include "resdit/grid.hpp"

namespace resdit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A TokenGrid viewed as a (tokens x channels) matrix; shares storage.
inline Eigen::Map<RowMatrix> as_matrix(TokenGrid& grid) {
    return {grid.data().data(), static_cast<Eigen::Index>(grid.tokens()),
            static_cast<Eigen::Index>(grid.channels())};
}

inline Eigen::Map<const RowMatrix> as_matrix(const TokenGrid& grid) {
    return {grid.data().data(), static_cast<Eigen::Index>(grid.tokens()),
            static_cast<Eigen::Index>(grid.channels())};
}

inline TokenGrid to_grid(const RowMatrix& m, std::size_t height, std::size_t width) {
    TokenGrid grid(height, width, static_cast<std::size_t>(m.cols()));
    as_matrix(grid) = m;
    return grid;
}

}  // namespace resdit
