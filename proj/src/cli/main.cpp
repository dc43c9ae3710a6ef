#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "resdit/cli/commands.hpp"
#include "resdit/cli/image.hpp"
#include "resdit/spectral.hpp"

namespace resdit::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Flags shared by every subcommand plus the overrides they turn into.
struct Common {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::vector<std::string> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "JSON run config")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Seed (overrides the config)");
        cmd->add_option("--out", out, "Output path");
        cmd->add_option("--set", overrides, "Config override key.path=value (repeatable)");
    }

    template <typename T>
    void flag_override(const std::optional<T>& value, const std::string& key) {
        if (value) overrides.push_back(key + "=" + ordered_json(*value).dump());
    }

    RunConfig load() {
        flag_override(seed, "seed");
        return load_run_config(config, overrides);
    }

    fs::path out_or(const fs::path& fallback) const { return out.value_or(fallback); }
};

void print_json(const ordered_json& j) { std::cout << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free resolution scaling for a toy diffusion transformer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "resdit 0.1.0");

    // train
    Common train_c;
    std::optional<std::size_t> train_steps, train_batch;
    std::optional<fs::path> train_log;
    auto* train = app.add_subcommand("train", "Train the toy DiT on synthetic disks");
    train_c.attach(train);
    train->add_option("--steps", train_steps, "Training steps");
    train->add_option("--batch-size", train_batch, "Examples per step");
    train->add_option("--log", train_log, "Loss log (default: <out>.loss.jsonl)");

    // generate
    Common gen_c;
    fs::path gen_ckpt;
    std::optional<std::size_t> gen_h, gen_w;
    std::optional<int> gen_label;
    bool gen_vanilla = false, gen_hard = false, gen_tiles = false, gen_avg = false;
    auto* gen = app.add_subcommand("generate", "Sample an image from a checkpoint");
    gen_c.attach(gen);
    gen->add_option("--checkpoint", gen_ckpt, "Checkpoint from `train`")->required();
    gen->add_option("--height", gen_h, "Target height in pixels");
    gen->add_option("--width", gen_w, "Target width in pixels");
    gen->add_option("--label", gen_label, "Class label; enables guidance");
    gen->add_flag("--vanilla-pe", gen_vanilla, "Ablation: integer positions in the global branch");
    gen->add_flag("--no-splice-gaussian", gen_hard, "Ablation: nearest-window hard splice");
    gen->add_flag("--no-overlap", gen_tiles, "Ablation: disjoint tiles");
    gen->add_flag("--no-fusion", gen_avg, "Ablation: average instead of spectral fusion");

    // layout
    Common lay_c;
    LayoutArgs lay;
    auto* layout = app.add_subcommand("layout", "Print a minimum-overlap patch layout");
    lay_c.attach(layout);
    layout->add_option("--grid-h", lay.grid_h, "Grid height (tokens)")->required();
    layout->add_option("--grid-w", lay.grid_w, "Grid width (tokens)")->required();
    layout->add_option("--patch-h", lay.patch_h, "Patch height (tokens)")->required();
    layout->add_option("--patch-w", lay.patch_w, "Patch width (tokens)")->required();
    layout->add_option("--n-rows", lay.n_rows, "Windows along rows (default: minimum)");
    layout->add_option("--n-cols", lay.n_cols, "Windows along columns (default: minimum)");

    // inspect-spectrum
    Common spec_c;
    fs::path spec_image;
    std::optional<std::size_t> spec_ph, spec_pw;
    std::optional<double> spec_cutoff;
    auto* spec = app.add_subcommand("inspect-spectrum", "Write per-window magnitude spectra");
    spec_c.attach(spec);
    spec->add_option("--image", spec_image, "Input graymap")->required();
    spec->add_option("--patch-h", spec_ph, "Window height in pixels (default: training size)");
    spec->add_option("--patch-w", spec_pw, "Window width in pixels (default: training size)");
    spec->add_option("--cutoff", spec_cutoff, "Normalized low-pass cutoff");

    // seam-metric
    Common seam_c;
    fs::path seam_image;
    bool seam_tiles = false;
    auto* seam = app.add_subcommand("seam-metric", "Seam energy of an image along a layout");
    seam_c.attach(seam);
    seam->add_option("--image", seam_image, "Input graymap")->required();
    seam->add_flag("--tiles", seam_tiles, "Measure along disjoint tiles");

    // fig2
    Common fig_c;
    fs::path fig_ckpt;
    std::optional<std::size_t> fig_seeds, fig_scale;
    std::vector<std::string> fig_regimes;
    auto* fig2 = app.add_subcommand("fig2", "Positional-embedding / attention-range study");
    fig_c.attach(fig2);
    fig2->add_option("--checkpoint", fig_ckpt, "Checkpoint from `train`")->required();
    fig2->add_option("--seeds", fig_seeds, "Seeds per regime");
    fig2->add_option("--scale", fig_scale, "Resolution multiple");
    fig2->add_option("--regimes", fig_regimes, "Subset of regimes")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUserError;
    }

    try {
        std::cout << std::setprecision(10);
        if (*train) {
            train_c.flag_override(train_steps, "train.steps");
            train_c.flag_override(train_batch, "train.batch_size");
            const RunConfig cfg = train_c.load();
            const fs::path ckpt = train_c.out_or("resdit.ckpt");
            const fs::path log = train_log.value_or(fs::path(ckpt.string() + ".loss.jsonl"));
            const TrainSummary s = run_train(cfg, ckpt, log);
            print_json({{"checkpoint", ckpt.string()},
                        {"loss_log", log.string()},
                        {"steps", s.steps},
                        {"initial_loss", s.initial_loss},
                        {"final_loss", s.final_loss},
                        {"seconds", s.seconds}});
        } else if (*gen) {
            gen_c.flag_override(gen_h, "target.height_px");
            gen_c.flag_override(gen_w, "target.width_px");
            if (gen_label) {
                gen_c.flag_override(std::optional<bool>(true), "guidance.enabled");
                gen_c.flag_override(gen_label, "guidance.label");
            }
            auto flag = [&](bool on, const char* key) {
                if (on) gen_c.overrides.push_back(std::string(key) + "=true");
            };
            flag(gen_vanilla, "ablation.vanilla_pe");
            flag(gen_hard, "ablation.no_splice_gaussian");
            flag(gen_tiles, "ablation.no_overlap");
            flag(gen_avg, "ablation.no_fusion");
            const RunConfig cfg = gen_c.load();
            const ToyDiT model = load_model(gen_ckpt, cfg);
            const fs::path out = gen_c.out_or("sample.pgm");
            const Generated g = generate(model, cfg, cfg.seed);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            write_pgm(out, g.image, cfg.image_bits);
            ordered_json rec{{"image", out.string()},
                             {"height_px", g.image.height()},
                             {"width_px", g.image.width()},
                             {"seed", cfg.seed}};
            rec.update(stats_json(g.stats));
            print_json(rec);
        } else if (*layout) {
            lay_c.load();
            PatchLayout l;
            try {
                l = make_layout(lay.grid_h, lay.grid_w, lay.patch_h, lay.patch_w, lay.n_rows,
                                lay.n_cols);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            if (lay_c.out) {
                std::ofstream file(*lay_c.out, std::ios::trunc);
                if (!file) throw std::runtime_error("cannot open " + lay_c.out->string());
                print_layout(l, file);
            } else {
                print_layout(l, std::cout);
            }
        } else if (*spec) {
            spec_c.flag_override(spec_cutoff, "fusion.cutoff");
            const RunConfig cfg = spec_c.load();
            const TokenGrid image = read_pgm(spec_image);
            const std::size_t ph = spec_ph.value_or(cfg.model.base_h * cfg.model.patch_px);
            const std::size_t pw = spec_pw.value_or(cfg.model.base_w * cfg.model.patch_px);
            PatchLayout l;
            try {
                l = make_layout(image.height(), image.width(), ph, pw, cfg.n_rows, cfg.n_cols);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            const std::size_t n =
                inspect_spectrum(image, l, cfg.fusion, spec_c.out_or("spectra"), std::cout);
            print_json({{"record", "summary"}, {"files", n}, {"windows", l.size()}});
        } else if (*seam) {
            const RunConfig cfg = seam_c.load();
            const TokenGrid image = read_pgm(seam_image);
            const std::size_t p = cfg.model.patch_px;
            if (image.height() % p != 0 || image.width() % p != 0) {
                throw ConfigError("image size must be divisible by model.patch_px");
            }
            const std::size_t gh = image.height() / p, gw = image.width() / p;
            PatchLayout l;
            try {
                l = seam_tiles ? make_tiled_layout(gh, gw, cfg.model.base_h, cfg.model.base_w)
                               : make_layout(gh, gw, cfg.model.base_h, cfg.model.base_w,
                                             cfg.n_rows, cfg.n_cols);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            print_json({{"image", seam_image.string()},
                        {"layout", seam_tiles ? "tiles" : "min_overlap"},
                        {"windows", l.size()},
                        {"seam_energy", seam_energy(image, l, p)}});
        } else if (*fig2) {
            fig_c.flag_override(fig_seeds, "fig2.seeds");
            fig_c.flag_override(fig_scale, "fig2.scale");
            const RunConfig cfg = fig_c.load();
            const ToyDiT model = load_model(fig_ckpt, cfg);
            const fs::path out = fig_c.out_or("fig2");
            const auto rows = run_fig2(model, cfg, out, fig_regimes, std::cerr);
            for (const auto& r : rows) {
                print_json({{"regime", r.name},
                            {"seeds", r.seeds},
                            {"mean_area_fraction", r.mean_area_fraction},
                            {"mean_seam_energy", r.mean_seam_energy},
                            {"area_deviation", r.area_deviation}});
            }
        }
    } catch (const DivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const ConsistencyError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUserError;
    }
    return kOk;
}

}  // namespace resdit::cli
