#include <fstream>
#include <stdexcept>

#include "resdit/dit.hpp"

namespace resdit {

nlohmann::json to_json(const ModelConfig& cfg) {
    return nlohmann::ordered_json{
        {"model_dim", cfg.model_dim},     {"num_heads", cfg.num_heads},
        {"num_blocks", cfg.num_blocks},   {"mlp_ratio", cfg.mlp_ratio},
        {"patch_px", cfg.patch_px},       {"base_h", cfg.base_h},
        {"base_w", cfg.base_w},           {"num_classes", cfg.num_classes},
        {"rope_base", cfg.rope_base},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.model_dim = j.value("model_dim", cfg.model_dim);
    cfg.num_heads = j.value("num_heads", cfg.num_heads);
    cfg.num_blocks = j.value("num_blocks", cfg.num_blocks);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.patch_px = j.value("patch_px", cfg.patch_px);
    cfg.base_h = j.value("base_h", cfg.base_h);
    cfg.base_w = j.value("base_w", cfg.base_w);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.rope_base = j.value("rope_base", cfg.rope_base);
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ToyDiT& model,
                     const nlohmann::json& run_config) {
    nlohmann::ordered_json manifest;
    manifest["format"] = "resdit-checkpoint";
    manifest["version"] = 1;
    manifest["model"] = to_json(model.config());
    manifest["run_config"] = run_config;
    auto& entries = manifest["parameters"] = nlohmann::ordered_json::array();
    for (const auto& p : model.parameters()) {
        entries.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    }
    out << manifest.dump() << '\n';
    for (const auto& p : model.parameters()) {
        TokenGrid grid(static_cast<std::size_t>(p.value.rows()),
                       static_cast<std::size_t>(p.value.cols()), 1);
        std::copy_n(p.value.data(), p.value.size(), grid.data().data());
        write_tensor(out, grid);
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("checkpoint is empty: " + path.string());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint manifest is malformed: ") + e.what());
    }
    if (manifest.value("format", "") != "resdit-checkpoint") {
        throw std::runtime_error("not a resdit checkpoint: " + path.string());
    }

    LoadedCheckpoint ckpt{ToyDiT(model_config_from_json(manifest.at("model")), 0),
                          manifest.value("run_config", nlohmann::json::object())};
    auto& params = ckpt.model.parameters();
    const auto& entries = manifest.at("parameters");
    if (entries.size() != params.size()) {
        throw std::runtime_error("checkpoint parameter count does not match the model");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        if (e.at("name").get<std::string>() != params[i].name ||
            e.at("rows").get<Eigen::Index>() != params[i].value.rows() ||
            e.at("cols").get<Eigen::Index>() != params[i].value.cols()) {
            throw std::runtime_error("checkpoint parameter '" + e.at("name").get<std::string>() +
                                     "' does not match the model layout");
        }
        const TokenGrid grid = read_tensor(in);
        if (grid.size() != static_cast<std::size_t>(params[i].value.size())) {
            throw std::runtime_error("checkpoint tensor size mismatch for " + params[i].name);
        }
        std::copy_n(grid.data().data(), grid.size(), params[i].value.data());
    }
    return ckpt;
}

}  // namespace resdit
