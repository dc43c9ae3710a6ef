#include "resdit/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "resdit/cli/image.hpp"
#include "resdit/spectral.hpp"

namespace resdit::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::ofstream open_text(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    return out;
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

double mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += v[i];
    return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

}  // namespace

TrainSummary run_train(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& loss_log) {
    ensure_parent(checkpoint);
    ensure_parent(loss_log);
    auto log = open_text(loss_log);
    log << std::setprecision(17);

    const auto start = std::chrono::steady_clock::now();
    ToyDiT model(cfg.model, cfg.seed);
    Trainer trainer(model, cfg.train_config());
    std::vector<double> losses;
    losses.reserve(cfg.train.steps);
    for (std::size_t step = 1; step <= cfg.train.steps; ++step) {
        const double loss = trainer.train_step();
        losses.push_back(loss);
        if (step % cfg.log_every == 0 || step == cfg.train.steps) {
            log << ordered_json{{"step", step}, {"loss", loss}}.dump() << '\n';
        }
    }
    log.flush();
    if (!log) {
        throw std::runtime_error("failed writing " + loss_log.string());
    }
    save_checkpoint(checkpoint, model, to_json(cfg));

    TrainSummary s;
    s.steps = losses.size();
    const std::size_t window = std::max<std::size_t>(1, losses.size() / 10);
    s.initial_loss = mean(losses, 0, window);
    s.final_loss = mean(losses, losses.size() - window, losses.size());
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
}

ToyDiT load_model(const fs::path& checkpoint, const RunConfig& cfg) {
    LoadedCheckpoint ckpt = [&] {
        try {
            return load_checkpoint(checkpoint);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("checkpoint model is invalid: ") + e.what());
        }
    }();
    if (resdit::to_json(ckpt.model.config()) != resdit::to_json(cfg.model)) {
        throw ConfigError("checkpoint model " + resdit::to_json(ckpt.model.config()).dump() +
                          " does not match the configured model " +
                          resdit::to_json(cfg.model).dump());
    }
    return std::move(ckpt.model);
}

Generated generate(const ToyDiT& model, const RunConfig& cfg, std::uint64_t seed) {
    const auto& mc = model.config();
    const SamplingOptions opts = cfg.sampling_options();
    Generated g;
    g.layout = make_context(mc, cfg.target_h_px / mc.patch_px, cfg.target_w_px / mc.patch_px, opts)
                   .layout;
    g.image = sample(model, cfg.schedule(), cfg.target_h_px, cfg.target_w_px, seed, cfg.guidance,
                     opts);
    g.stats = disk_stats(g.image, &g.layout, mc.patch_px);
    return g;
}

ordered_json stats_json(const DiskStats& stats) {
    return {
        {"area_fraction", stats.area_fraction},
        {"centroid_row", stats.centroid_row},
        {"centroid_col", stats.centroid_col},
        {"seam_energy", stats.seam_energy},
    };
}

void print_layout(const PatchLayout& layout, std::ostream& out) {
    auto steps = [](const std::vector<std::size_t>& starts, std::size_t patch) {
        std::vector<std::size_t> stride, overlap;
        for (std::size_t k = 1; k < starts.size(); ++k) {
            const std::size_t d = starts[k] - starts[k - 1];
            stride.push_back(d);
            overlap.push_back(patch > d ? patch - d : 0);
        }
        return std::pair{stride, overlap};
    };
    const auto [row_stride, row_overlap] = steps(layout.row_starts, layout.patch_h);
    const auto [col_stride, col_overlap] = steps(layout.col_starts, layout.patch_w);
    ordered_json summary{
        {"record", "layout"},
        {"grid", {layout.grid_h, layout.grid_w}},
        {"patch", {layout.patch_h, layout.patch_w}},
        {"min_n", {min_n(layout.grid_h, layout.patch_h), min_n(layout.grid_w, layout.patch_w)}},
        {"n", {layout.n_rows, layout.n_cols}},
        {"windows", layout.size()},
        {"row_starts", layout.row_starts},
        {"col_starts", layout.col_starts},
        {"row_stride", row_stride},
        {"col_stride", col_stride},
        {"row_overlap", row_overlap},
        {"col_overlap", col_overlap},
    };
    out << summary.dump() << '\n';
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& w = layout.windows[i];
        out << ordered_json{{"record", "window"},   {"index", i},
                            {"row_start", w.row_start}, {"col_start", w.col_start},
                            {"height", w.height},   {"width", w.width},
                            {"center", {layout.centers[i][0], layout.centers[i][1]}}}
                   .dump()
            << '\n';
    }
}

std::size_t inspect_spectrum(const TokenGrid& image, const PatchLayout& layout,
                             const FusionConfig& fusion, const fs::path& out_dir,
                             std::ostream& report) {
    fusion.validate();
    fs::create_directories(out_dir);
    std::size_t written = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const Spectrum spec = fft2(extract_patch(image, layout.windows[i]));
        TokenGrid mag(spec.rows, spec.cols, 1);
        double peak = 0.0;
        for (std::size_t u = 0; u < spec.rows; ++u) {
            for (std::size_t v = 0; v < spec.cols; ++v) {
                double m = 0.0;
                for (std::size_t c = 0; c < spec.channels; ++c) m += std::abs(spec.at(u, v, c));
                mag.at(u, v, 0) = std::log1p(m);
                peak = std::max(peak, mag.at(u, v, 0));
            }
        }
        if (peak > 0.0) {
            for (double& v : mag.data()) v /= peak;
        }
        char name[32];
        std::snprintf(name, sizeof name, "patch_%03zu.pgm", i);
        write_pgm(out_dir / name, mag, 8);
        ++written;
        report << ordered_json{{"record", "spectrum"}, {"window", i}, {"file", name},
                               {"peak_log_magnitude", peak}}
                      .dump()
               << '\n';
    }
    const SpectralMask mask =
        lowpass_mask(layout.patch_h, layout.patch_w, fusion.cutoff, fusion.shape);
    TokenGrid m(mask.rows, mask.cols, 1);
    for (std::size_t u = 0; u < mask.rows; ++u) {
        for (std::size_t v = 0; v < mask.cols; ++v) m.at(u, v, 0) = mask.at(u, v);
    }
    write_pgm(out_dir / "mask.pgm", m, 8);
    ++written;
    report << ordered_json{{"record", "mask"},       {"file", "mask.pgm"},
                           {"cutoff", fusion.cutoff}, {"ones", mask.count_ones()}}
                  .dump()
           << '\n';
    return written;
}

std::vector<Fig2Regime> fig2_regimes(const RunConfig& cfg) {
    RunConfig plain = cfg;
    plain.ablation = {};
    const SamplingOptions base = plain.sampling_options();
    const std::size_t n = cfg.sampler.steps;
    const SamplerSchedule all_global = build_schedule(n, n, 0);
    const SamplerSchedule all_local = build_schedule(n, 0, n);

    auto with = [&](auto edit) {
        SamplingOptions o = base;
        edit(o);
        return o;
    };
    std::vector<Fig2Regime> r;
    r.push_back({"a", "base resolution, global attention, vanilla PE", true, all_global, base});
    r.push_back({"b", "global attention, vanilla PE", false, all_global,
                 with([](auto& o) { o.global_pe = GlobalPE::Vanilla; })});
    r.push_back({"c", "global attention, scaled PE", false, all_global, base});
    r.push_back({"d", "global attention, patch-wise base PE tiled across the canvas", false,
                 all_global, with([](auto& o) { o.global_pe = GlobalPE::Tiled; })});
    r.push_back({"e", "patch-local attention on disjoint tiles", false, all_local,
                 with([](auto& o) {
                     o.tiles = true;
                     o.splice_mode = SpliceMode::Hard;
                 })});
    r.push_back({"e_gaussian", "patch-local attention, minimum-overlap layout, Gaussian splice",
                 false, all_local, base});
    r.push_back({"resdit", "global/fused/local schedule, minimum-overlap layout, Gaussian splice",
                 false, cfg.schedule(), base});
    r.push_back({"resdit_hard_tiles", "global/fused/local schedule, disjoint tiles, hard splice",
                 false, cfg.schedule(), with([](auto& o) {
                     o.tiles = true;
                     o.splice_mode = SpliceMode::Hard;
                 })});
    return r;
}

std::vector<Fig2Row> run_fig2(const ToyDiT& model, const RunConfig& cfg, const fs::path& out_dir,
                              const std::vector<std::string>& only, std::ostream& progress) {
    const auto& mc = model.config();
    std::vector<Fig2Regime> regimes;
    for (auto& r : fig2_regimes(cfg)) {
        if (only.empty() || std::find(only.begin(), only.end(), r.name) != only.end()) {
            regimes.push_back(std::move(r));
        }
    }
    for (const auto& name : only) {
        if (std::none_of(regimes.begin(), regimes.end(),
                         [&](const Fig2Regime& r) { return r.name == name; })) {
            throw ConfigError("unknown fig2 regime '" + name + "'");
        }
    }

    struct Prepared {
        const Fig2Regime* regime;
        std::size_t h_px, w_px;
        PatchLayout layout;
    };
    std::vector<Prepared> prepared;
    for (const auto& r : regimes) {
        const std::size_t gh = r.base_resolution ? mc.base_h : mc.base_h * cfg.fig2.scale;
        const std::size_t gw = r.base_resolution ? mc.base_w : mc.base_w * cfg.fig2.scale;
        try {
            prepared.push_back({&r, gh * mc.patch_px, gw * mc.patch_px,
                                make_context(mc, gh, gw, r.options).layout});
        } catch (const std::invalid_argument& e) {
            throw ConfigError("fig2 regime " + r.name + ": " + e.what());
        }
    }

    fs::create_directories(out_dir);
    auto report = open_text(out_dir / "report.jsonl");
    report << std::setprecision(17);

    std::vector<Fig2Row> rows;
    for (const auto& p : prepared) {
        const auto& r = *p.regime;
        fs::create_directories(out_dir / r.name);
        Fig2Row row{r.name, cfg.fig2.seeds};
        for (std::size_t k = 0; k < cfg.fig2.seeds; ++k) {
            const std::uint64_t seed = cfg.seed + k;
            const TokenGrid image =
                sample(model, r.schedule, p.h_px, p.w_px, seed, cfg.guidance, r.options);
            const DiskStats st = disk_stats(image, &p.layout, mc.patch_px);
            char name[32];
            std::snprintf(name, sizeof name, "seed_%03zu.pgm", k);
            write_pgm(out_dir / r.name / name, image, cfg.image_bits);
            ordered_json rec{{"record", "sample"}, {"regime", r.name}, {"seed", seed},
                             {"image", (fs::path(r.name) / name).string()}};
            rec.update(stats_json(st));
            report << rec.dump() << '\n';
            row.mean_area_fraction += st.area_fraction;
            row.mean_seam_energy += st.seam_energy;
            row.mean_centroid_row += st.centroid_row;
            row.mean_centroid_col += st.centroid_col;
        }
        const double n = static_cast<double>(cfg.fig2.seeds);
        row.mean_area_fraction /= n;
        row.mean_seam_energy /= n;
        row.mean_centroid_row /= n;
        row.mean_centroid_col /= n;
        rows.push_back(row);
        progress << "fig2: regime " << r.name << " done (" << cfg.fig2.seeds << " seeds)\n";
    }

    const auto base = std::find_if(rows.begin(), rows.end(), [](const Fig2Row& r) { return r.name == "a"; });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& row = rows[i];
        ordered_json rec{{"record", "regime"},
                         {"regime", row.name},
                         {"description", prepared[i].regime->description},
                         {"height_px", prepared[i].h_px},
                         {"width_px", prepared[i].w_px},
                         {"seeds", row.seeds},
                         {"mean_area_fraction", row.mean_area_fraction},
                         {"mean_seam_energy", row.mean_seam_energy},
                         {"mean_centroid_row", row.mean_centroid_row},
                         {"mean_centroid_col", row.mean_centroid_col}};
        if (base != rows.end() && base->mean_area_fraction > 0.0) {
            row.area_deviation = std::abs(row.mean_area_fraction - base->mean_area_fraction) /
                                 base->mean_area_fraction;
            rec["area_deviation"] = row.area_deviation;
        } else {
            rec["area_deviation"] = nullptr;
        }
        report << rec.dump() << '\n';
    }
    report.flush();
    if (!report) {
        throw std::runtime_error("failed writing the fig2 report");
    }
    return rows;
}

}  // namespace resdit::cli
