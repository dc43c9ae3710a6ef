#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "resdit/cli/config.hpp"
#include "resdit/dit.hpp"

namespace resdit::cli {

enum ExitCode : int { kOk = 0, kUserError = 2, kNumericalFailure = 3 };

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainSummary {
    std::size_t steps = 0;
    double initial_loss = 0.0;   // mean over the first tenth of the run
    double final_loss = 0.0;     // mean over the last tenth
    double seconds = 0.0;
};

/// Trains from scratch, writes the checkpoint to `checkpoint` and one {"step", "loss"} record
/// per logged step to `loss_log`.
TrainSummary run_train(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& loss_log);

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Model from `checkpoint`; fails with ConfigError when its shape disagrees with cfg.model.
ToyDiT load_model(const std::filesystem::path& checkpoint, const RunConfig& cfg);

struct Generated {
    TokenGrid image;
    PatchLayout layout;  // token-level layout the local branch used
    DiskStats stats;
};

/// Samples at the configured target size with the configured schedule and ablations.
Generated generate(const ToyDiT& model, const RunConfig& cfg, std::uint64_t seed);

nlohmann::ordered_json stats_json(const DiskStats& stats);

// ---------------------------------------------------------------------------
// layout / spectrum / seams
// ---------------------------------------------------------------------------

struct LayoutArgs {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t patch_h = 0;
    std::size_t patch_w = 0;
    std::optional<std::size_t> n_rows;
    std::optional<std::size_t> n_cols;
};

/// One summary record, then one record per window.
void print_layout(const PatchLayout& layout, std::ostream& out);

/// Writes patch_<i>.pgm (log-magnitude spectrum of each window, DC at the center) and
/// mask.pgm into `out_dir`; returns the number of files written.
std::size_t inspect_spectrum(const TokenGrid& image, const PatchLayout& layout,
                             const FusionConfig& fusion, const std::filesystem::path& out_dir,
                             std::ostream& report);

// ---------------------------------------------------------------------------
// fig2
// ---------------------------------------------------------------------------

struct Fig2Regime {
    std::string name;
    std::string description;
    bool base_resolution = false;
    SamplerSchedule schedule;
    SamplingOptions options;
};

/// Regimes of the intervention study plus the splice comparison rows.
std::vector<Fig2Regime> fig2_regimes(const RunConfig& cfg);

struct Fig2Row {
    std::string name;
    std::size_t seeds = 0;
    double mean_area_fraction = 0.0;
    double mean_seam_energy = 0.0;
    double mean_centroid_row = 0.0;
    double mean_centroid_col = 0.0;
    double area_deviation = 0.0;  // |mean area - base mean area| / base mean area
};

/// Runs every selected regime (all when `only` is empty) over cfg.fig2.seeds seeds starting at
/// cfg.seed, writing <out_dir>/<regime>/seed_<k>.pgm and <out_dir>/report.jsonl.
std::vector<Fig2Row> run_fig2(const ToyDiT& model, const RunConfig& cfg,
                              const std::filesystem::path& out_dir,
                              const std::vector<std::string>& only, std::ostream& progress);

/// Command-line entry point; returns the process exit code.
int main(int argc, char** argv);

}  // namespace resdit::cli
