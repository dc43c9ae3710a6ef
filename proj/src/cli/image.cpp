#include "resdit/cli/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace resdit::cli {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    char ch = 0;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string discard;
            std::getline(in, discard);
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            token.push_back(ch);
            break;
        }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) token.push_back(ch);
    return token;
}

std::size_t parse_header_number(std::istream& in, const std::string& what) {
    const std::string token = next_token(in);
    if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit)) {
        throw std::runtime_error("graymap header: bad " + what + " '" + token + "'");
    }
    return std::stoul(token);
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const TokenGrid& image, int bits) {
    if (image.channels() != 1) {
        throw std::invalid_argument("write_pgm: single-channel image required");
    }
    if (bits != 8 && bits != 16) {
        throw std::invalid_argument("write_pgm: bits must be 8 or 16");
    }
    const unsigned maxval = bits == 8 ? 255u : 65535u;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << image.width() << ' ' << image.height() << '\n' << maxval << '\n';
    for (double v : image.data()) {
        const auto level = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
        if (bits == 8) {
            out.put(static_cast<char>(level));
        } else {
            out.put(static_cast<char>(level >> 8));
            out.put(static_cast<char>(level & 0xff));
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

TokenGrid read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open image " + path.string());
    }
    if (next_token(in) != "P5") {
        throw std::runtime_error(path.string() + " is not a binary graymap (P5)");
    }
    const std::size_t width = parse_header_number(in, "width");
    const std::size_t height = parse_header_number(in, "height");
    const std::size_t maxval = parse_header_number(in, "maxval");
    if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
        throw std::runtime_error(path.string() + ": unsupported graymap dimensions or maxval");
    }
    const bool wide = maxval > 255;
    TokenGrid image(height, width, 1);
    for (double& v : image.data()) {
        unsigned level = 0;
        char hi = 0, lo = 0;
        if (!in.get(hi)) break;
        level = static_cast<unsigned char>(hi);
        if (wide) {
            if (!in.get(lo)) break;
            level = (level << 8) | static_cast<unsigned char>(lo);
        }
        v = static_cast<double>(level) / static_cast<double>(maxval);
    }
    if (!in) {
        throw std::runtime_error(path.string() + ": truncated pixel data");
    }
    return image;
}

}  // namespace resdit::cli
