#include "resdit/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace resdit {

TokenGrid::TokenGrid(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height == 0 || width == 0 || channels == 0) {
        throw std::invalid_argument("TokenGrid: all dimensions must be >= 1");
    }
    data_.assign(height * width * channels, fill);
}

TokenGrid new_grid(std::size_t height, std::size_t width, std::size_t channels, double fill) {
    return TokenGrid(height, width, channels, fill);
}

void check_window(const Window& win, std::size_t height, std::size_t width) {
    if (win.height == 0 || win.width == 0) {
        throw std::invalid_argument("window must be non-empty");
    }
    if (win.row_end() > height || win.col_end() > width) {
        throw std::invalid_argument("window (" + std::to_string(win.row_start) + ", " +
                                    std::to_string(win.col_start) + ", " +
                                    std::to_string(win.height) + ", " + std::to_string(win.width) +
                                    ") exceeds grid " + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
}

TokenGrid extract_patch(const TokenGrid& grid, const Window& win) {
    check_window(win, grid.height(), grid.width());
    TokenGrid patch(win.height, win.width, grid.channels());
    const std::size_t row_len = win.width * grid.channels();
    for (std::size_t i = 0; i < win.height; ++i) {
        auto src = grid.token(win.row_start + i, win.col_start);
        std::copy_n(src.data(), row_len, patch.token(i, 0).data());
    }
    return patch;
}

namespace {

void check_accumulate(const TokenGrid& grid, const Window& win, const TokenGrid& patch,
                      std::span<const double> weights) {
    check_window(win, grid.height(), grid.width());
    if (patch.height() != win.height || patch.width() != win.width ||
        patch.channels() != grid.channels()) {
        throw std::invalid_argument("accumulate_patch: patch shape does not match window");
    }
    if (weights.size() != patch.tokens()) {
        throw std::invalid_argument("accumulate_patch: weights must have one entry per token");
    }
}

void accumulate_into(TokenGrid& grid, const Window& win, const TokenGrid& patch,
                     std::span<const double> weights) {
    const std::size_t channels = grid.channels();
    for (std::size_t i = 0; i < win.height; ++i) {
        for (std::size_t j = 0; j < win.width; ++j) {
            const double w = weights[i * win.width + j];
            auto dst = grid.token(win.row_start + i, win.col_start + j);
            auto src = patch.token(i, j);
            for (std::size_t ch = 0; ch < channels; ++ch) {
                dst[ch] += w * src[ch];
            }
        }
    }
}

}  // namespace

void accumulate_patch(TokenGrid& grid, const Window& win, const TokenGrid& patch,
                      std::span<const double> weights) {
    check_accumulate(grid, win, patch, weights);
    accumulate_into(grid, win, patch, weights);
}

void accumulate_patch(TokenGrid& grid, TokenGrid& weight_sum, const Window& win,
                      const TokenGrid& patch, std::span<const double> weights) {
    check_accumulate(grid, win, patch, weights);
    if (weight_sum.height() != grid.height() || weight_sum.width() != grid.width() ||
        weight_sum.channels() != 1) {
        throw std::invalid_argument("accumulate_patch: weight_sum must be a single-channel grid");
    }
    accumulate_into(grid, win, patch, weights);
    for (std::size_t i = 0; i < win.height; ++i) {
        for (std::size_t j = 0; j < win.width; ++j) {
            weight_sum.at(win.row_start + i, win.col_start + j, 0) += weights[i * win.width + j];
        }
    }
}

bool all_finite(const TokenGrid& grid) {
    return std::all_of(grid.data().begin(), grid.data().end(),
                       [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const TokenGrid& a, const TokenGrid& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

void write_tensor(std::ostream& out, const TokenGrid& grid) {
    const nlohmann::ordered_json header = {
        {"height", grid.height()}, {"width", grid.width()}, {"channels", grid.channels()}};
    out << header.dump() << '\n';
    std::string payload(grid.size() * 4, '\0');
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid.data()[i]));
        for (int b = 0; b < 4; ++b) {
            payload[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
        }
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw std::runtime_error("write_tensor: stream write failed");
    }
}

TokenGrid read_tensor(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_tensor: missing header line");
    }
    std::size_t h = 0, w = 0, c = 0;
    try {
        const auto header = nlohmann::json::parse(line);
        h = header.at("height").get<std::size_t>();
        w = header.at("width").get<std::size_t>();
        c = header.at("channels").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("read_tensor: malformed header: ") + e.what());
    }
    TokenGrid grid(h, w, c);
    std::string payload(grid.size() * 4, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
        throw std::runtime_error("read_tensor: truncated payload");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[i * 4 + b]))
                    << (8 * b);
        }
        grid.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return grid;
}

}  // namespace resdit
