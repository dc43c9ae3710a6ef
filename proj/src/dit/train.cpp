#include <cmath>
#include <stdexcept>
#include <string>

#include "resdit/dit.hpp"

namespace resdit {

void TrainConfig::validate() const {
    if (steps == 0 || batch_size == 0) {
        throw std::invalid_argument("train: steps and batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("train: learning_rate must be finite and > 0");
    }
    if (!(grad_clip >= 0.0)) {
        throw std::invalid_argument("train: grad_clip must be >= 0");
    }
    if (!(class_dropout >= 0.0 && class_dropout <= 1.0)) {
        throw std::invalid_argument("train: class_dropout must lie in [0, 1]");
    }
}

void Optimizer::step(std::vector<Parameter>& params) {
    if (cfg_.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) sq += p.grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) {
            const double s = cfg_.grad_clip / norm;
            for (auto& p : params) p.grad *= s;
        }
    }
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
        for (auto& p : params) p.value -= lr * p.grad;
        return;
    }

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(RowMatrix::Zero(p.value.rows(), p.value.cols()));
            v_.push_back(RowMatrix::Zero(p.value.rows(), p.value.cols()));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * p.grad;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * p.grad.cwiseAbs2();
        p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
}

std::vector<TrainExample> make_batch(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                     std::mt19937_64& rng) {
    const std::size_t h_px = model_cfg.base_h * model_cfg.patch_px;
    const std::size_t w_px = model_cfg.base_w * model_cfg.patch_px;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<TrainExample> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        int label = kUnconditional;
        DiskSample s;
        if (model_cfg.num_classes > 0) {
            label = static_cast<int>(rng() % 2);
            s = label == 0 ? synth_disk(rng, h_px, w_px) : synth_ring(rng, h_px, w_px);
            if (uniform(rng) < cfg.class_dropout) label = kUnconditional;
        } else {
            s = synth_disk(rng, h_px, w_px);
        }
        // data lives in [-1, 1]
        TokenGrid x0 = patchify(s.image, model_cfg.patch_px);
        for (double& v : x0.data()) v = 2.0 * v - 1.0;

        const double t = uniform(rng);
        TrainExample ex{x0, x0, t, label};
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double eps = normal(rng);
            ex.noisy.data()[i] = (1.0 - t) * x0.data()[i] + t * eps;
            ex.target.data()[i] = eps - x0.data()[i];
        }
        batch.push_back(std::move(ex));
    }
    return batch;
}

Trainer::Trainer(ToyDiT& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), optimizer_(cfg), rng_(cfg.seed) {
    cfg_.validate();
}

double Trainer::train_step() { return train_step(make_batch(model_.config(), cfg_, rng_)); }

double Trainer::train_step(const std::vector<TrainExample>& batch) {
    model_.zero_grad();
    const double loss = loss_and_grad(model_, batch);
    if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged at step " + std::to_string(step_) +
                              " (non-finite loss)");
    }
    optimizer_.step(model_.parameters());
    ++step_;
    return loss;
}

}  // namespace resdit
