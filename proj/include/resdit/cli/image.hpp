#pragma once

#include <filesystem>

#include "resdit/grid.hpp"

namespace resdit::cli {

/// Writes a single-channel grid in [0, 1] as a binary graymap (P5). `bits` is 8 or 16;
/// 16-bit samples are big-endian. Values are clamped and rounded to the nearest level.
void write_pgm(const std::filesystem::path& path, const TokenGrid& image, int bits = 8);

/// Reads a binary graymap (maxval up to 65535) into an (h x w x 1) grid scaled to [0, 1].
TokenGrid read_pgm(const std::filesystem::path& path);

}  // namespace resdit::cli
