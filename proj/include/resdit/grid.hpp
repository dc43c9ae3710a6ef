#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace resdit {

/// Rectangular footprint of a patch inside a parent grid, in token units.
struct Window {
    std::size_t row_start = 0;
    std::size_t col_start = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t row_end() const { return row_start + height; }
    std::size_t col_end() const { return col_start + width; }
    bool contains(std::size_t row, std::size_t col) const {
        return row >= row_start && row < row_end() && col >= col_start && col < col_end();
    }

    friend bool operator==(const Window&, const Window&) = default;
};

/// 2D grid of feature vectors. Storage is row-major, channel-last:
/// entry (r, c, ch) lives at ((r * width) + c) * channels + ch.
class TokenGrid {
public:
    TokenGrid() = default;
    TokenGrid(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t tokens() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t row, std::size_t col, std::size_t ch) {
        return data_[index(row, col, ch)];
    }
    double at(std::size_t row, std::size_t col, std::size_t ch) const {
        return data_[index(row, col, ch)];
    }

    std::span<double> token(std::size_t row, std::size_t col) {
        return {data_.data() + index(row, col, 0), channels_};
    }
    std::span<const double> token(std::size_t row, std::size_t col) const {
        return {data_.data() + index(row, col, 0), channels_};
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const TokenGrid& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const TokenGrid&, const TokenGrid&) = default;

private:
    std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const {
        return (row * width_ + col) * channels_ + ch;
    }

    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

TokenGrid new_grid(std::size_t height, std::size_t width, std::size_t channels, double fill);

/// Throws std::invalid_argument unless `win` lies inside a height x width grid.
void check_window(const Window& win, std::size_t height, std::size_t width);

TokenGrid extract_patch(const TokenGrid& grid, const Window& win);

/// grid[win] += weight * patch, channel-wise. `weights` holds one value per patch token.
void accumulate_patch(TokenGrid& grid, const Window& win, const TokenGrid& patch,
                      std::span<const double> weights);

/// As above, and additionally weight_sum[win] += weight (weight_sum is single-channel).
void accumulate_patch(TokenGrid& grid, TokenGrid& weight_sum, const Window& win,
                      const TokenGrid& patch, std::span<const double> weights);

bool all_finite(const TokenGrid& grid);

/// Largest absolute entrywise difference; shapes must match.
double max_abs_diff(const TokenGrid& a, const TokenGrid& b);

// Raw tensor records: a one-line JSON header {"height":H,"width":W,"channels":C}
// followed by H*W*C little-endian float32 values in storage order.
void write_tensor(std::ostream& out, const TokenGrid& grid);
TokenGrid read_tensor(std::istream& in);

}  // namespace resdit
