#include <cmath>
#include <numbers>
#include <stdexcept>

#include "resdit/dit.hpp"

namespace resdit {

namespace {

constexpr double kLayerNormEps = 1e-6;
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}
// tanh(k (x + c x^3)) elementwise, via the vectorized exp.
RowMatrix gelu_tanh(const RowMatrix& x) {
    const auto z = 2.0 * kGeluK * (x.array() + kGeluC * x.array().cube());
    return (1.0 - 2.0 / (z.exp() + 1.0)).matrix();
}
RowMatrix gelu(const RowMatrix& x, const RowMatrix& th) {
    return (0.5 * x.array() * (1.0 + th.array())).matrix();
}
RowMatrix gelu_grad(const RowMatrix& x, const RowMatrix& th) {
    const auto xa = x.array();
    const auto ta = th.array();
    return (0.5 * (1.0 + ta) +
            0.5 * xa * (1.0 - ta.square()) * kGeluK * (1.0 + 3.0 * kGeluC * xa.square()))
        .matrix();
}

RowMatrix layer_norm(const RowMatrix& x, Eigen::VectorXd& rstd) {
    const auto n = static_cast<double>(x.cols());
    RowMatrix out(x.rows(), x.cols());
    rstd.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).sum() / n;
        const auto centered = x.row(i).array() - mean;
        const double var = centered.square().sum() / n;
        rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
        out.row(i) = centered * rstd(i);
    }
    return out;
}

// d(input) of a non-affine layer norm given its normalized output.
RowMatrix layer_norm_backward(const RowMatrix& d_out, const RowMatrix& normed,
                              const Eigen::VectorXd& rstd) {
    const auto n = static_cast<double>(d_out.cols());
    RowMatrix d_in(d_out.rows(), d_out.cols());
    for (Eigen::Index i = 0; i < d_out.rows(); ++i) {
        const double mean_d = d_out.row(i).sum() / n;
        const double mean_dn = d_out.row(i).dot(normed.row(i)) / n;
        d_in.row(i) =
            rstd(i) * (d_out.row(i).array() - mean_d - normed.row(i).array() * mean_dn);
    }
    return d_in;
}

// x * (1 + scale) + shift with per-channel row vectors.
RowMatrix modulate(const RowMatrix& x, const RowVector& shift, const RowVector& scale) {
    RowMatrix out = x;
    out.array().rowwise() *= (1.0 + scale.array());
    out.rowwise() += shift;
    return out;
}

RowVector timestep_embedding(double t, std::size_t dim) {
    const std::size_t half = dim / 2;
    RowVector emb(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double arg = 1000.0 * t * freq;
        emb(static_cast<Eigen::Index>(i)) = std::cos(arg);
        emb(static_cast<Eigen::Index>(half + i)) = std::sin(arg);
    }
    return emb;
}

RowVector apply_silu(const RowVector& x) { return x.unaryExpr(&silu); }

struct Conditioning {
    RowVector freq;   // sinusoidal embedding
    RowVector pre1;   // t_fc1 pre-activation
    RowVector act1;   // silu(pre1)
    RowVector c;      // conditioning vector
    RowVector sc;     // silu(c)
};

Conditioning conditioning(const ToyDiT& model, double t, int label) {
    const auto& ix = model.index();
    Conditioning cond;
    cond.freq = timestep_embedding(t, model.config().model_dim);
    cond.pre1 = cond.freq * model.param(ix.t_fc1_w) + model.param(ix.t_fc1_b);
    cond.act1 = apply_silu(cond.pre1);
    cond.c = cond.act1 * model.param(ix.t_fc2_w) + model.param(ix.t_fc2_b);
    if (label >= 0 && static_cast<std::size_t>(label) >= model.config().num_classes) {
        throw std::invalid_argument("class label " + std::to_string(label) + " out of range");
    }
    if (ix.class_embed) {
        const auto& table = model.param(*ix.class_embed);
        cond.c += table.row(label < 0 ? table.rows() - 1 : label);
    }
    cond.sc = apply_silu(cond.c);
    return cond;
}

void check_tokens(const ToyDiT& model, const TokenGrid& tokens, double t) {
    if (tokens.channels() != model.config().patch_dim()) {
        throw std::invalid_argument("forward: token channels " + std::to_string(tokens.channels()) +
                                    " != patch dim " + std::to_string(model.config().patch_dim()));
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("forward: t must lie in [0, 1]");
    }
}

// Per-block activations kept for the backward pass.
struct BlockCache {
    RowVector shift1, scale1, gate1, shift2, scale2, gate2;
    RowMatrix n1, a, q_rot, k_rot, v, o, y;
    Eigen::VectorXd rstd1, rstd2;
    std::vector<RowMatrix> probs;  // per head
    RowMatrix n2, b, u, th, g, z;
};

struct ForwardCache {
    Conditioning cond;
    std::vector<BlockCache> blocks;
    RowVector final_shift, final_scale;
    RowMatrix final_norm, final_in;
    Eigen::VectorXd final_rstd;
};

// Training-time forward: base grid, vanilla integer RoPE, every intermediate cached.
RowMatrix forward_cached(const ToyDiT& model, const RotaryField& field, const RowMatrix& x,
                         double t, int label, ForwardCache& cache) {
    const auto& cfg = model.config();
    const auto& ix = model.index();
    const auto dim = static_cast<Eigen::Index>(cfg.model_dim);
    const auto heads = static_cast<Eigen::Index>(cfg.num_heads);
    const auto hd = dim / heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));

    cache.cond = conditioning(model, t, label);
    const RowVector& sc = cache.cond.sc;

    RowMatrix h = x * model.param(ix.embed_w);
    h.rowwise() += RowVector(model.param(ix.embed_b));

    cache.blocks.resize(ix.blocks.size());
    for (std::size_t bi = 0; bi < ix.blocks.size(); ++bi) {
        const auto& blk = ix.blocks[bi];
        auto& bc = cache.blocks[bi];
        const RowVector mod = sc * model.param(blk.mod_w) + model.param(blk.mod_b);
        bc.shift1 = mod.segment(0, dim);
        bc.scale1 = mod.segment(dim, dim);
        bc.gate1 = mod.segment(2 * dim, dim);
        bc.shift2 = mod.segment(3 * dim, dim);
        bc.scale2 = mod.segment(4 * dim, dim);
        bc.gate2 = mod.segment(5 * dim, dim);

        bc.n1 = layer_norm(h, bc.rstd1);
        bc.a = modulate(bc.n1, bc.shift1, bc.scale1);
        bc.q_rot = bc.a * model.param(blk.w_q);
        bc.k_rot = bc.a * model.param(blk.w_k);
        bc.v = bc.a * model.param(blk.w_v);
        rotate_heads(bc.q_rot.data(), static_cast<std::size_t>(x.rows()), cfg.num_heads, field);
        rotate_heads(bc.k_rot.data(), static_cast<std::size_t>(x.rows()), cfg.num_heads, field);
        bc.o.resize(x.rows(), dim);
        bc.probs.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index hh = 0; hh < heads; ++hh) {
            auto& p = bc.probs[static_cast<std::size_t>(hh)];
            p.noalias() = bc.q_rot.middleCols(hh * hd, hd) * bc.k_rot.middleCols(hh * hd, hd).transpose();
            p *= inv_sqrt_d;
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                auto row = p.row(i).array();
                row = (row - row.maxCoeff()).exp();
                row /= row.sum();
            }
            bc.o.middleCols(hh * hd, hd).noalias() = p * bc.v.middleCols(hh * hd, hd);
        }
        bc.y = bc.o * model.param(blk.w_o);
        h.array() += bc.y.array().rowwise() * bc.gate1.array();

        bc.n2 = layer_norm(h, bc.rstd2);
        bc.b = modulate(bc.n2, bc.shift2, bc.scale2);
        bc.u = bc.b * model.param(blk.fc1_w);
        bc.u.rowwise() += RowVector(model.param(blk.fc1_b));
        bc.th = gelu_tanh(bc.u);
        bc.g = gelu(bc.u, bc.th);
        bc.z = bc.g * model.param(blk.fc2_w);
        bc.z.rowwise() += RowVector(model.param(blk.fc2_b));
        h.array() += bc.z.array().rowwise() * bc.gate2.array();
    }

    const RowVector fmod = sc * model.param(ix.final_mod_w) + model.param(ix.final_mod_b);
    cache.final_shift = fmod.segment(0, dim);
    cache.final_scale = fmod.segment(dim, dim);
    cache.final_norm = layer_norm(h, cache.final_rstd);
    cache.final_in = modulate(cache.final_norm, cache.final_shift, cache.final_scale);
    RowMatrix out = cache.final_in * model.param(ix.final_w);
    out.rowwise() += RowVector(model.param(ix.final_b));
    return out;
}

void backward(ToyDiT& model, const RotaryField& field, const RowMatrix& x, int label,
              const ForwardCache& cache, const RowMatrix& d_out) {
    const auto& cfg = model.config();
    const auto ix = model.index();
    auto& P = model.parameters();
    const auto dim = static_cast<Eigen::Index>(cfg.model_dim);
    const auto heads = static_cast<Eigen::Index>(cfg.num_heads);
    const auto hd = dim / heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto tokens = static_cast<std::size_t>(x.rows());
    const RowVector& sc = cache.cond.sc;

    RowVector d_sc = RowVector::Zero(dim);

    // head
    P[ix.final_w].grad.noalias() += cache.final_in.transpose() * d_out;
    P[ix.final_b].grad += d_out.colwise().sum();
    RowMatrix d_fin = d_out * P[ix.final_w].value.transpose();
    RowVector d_fmod(2 * dim);
    d_fmod.segment(0, dim) = d_fin.colwise().sum();
    d_fmod.segment(dim, dim) = (d_fin.array() * cache.final_norm.array()).colwise().sum();
    P[ix.final_mod_w].grad.noalias() += sc.transpose() * d_fmod;
    P[ix.final_mod_b].grad += d_fmod;
    d_sc.noalias() += d_fmod * P[ix.final_mod_w].value.transpose();
    d_fin.array().rowwise() *= (1.0 + cache.final_scale.array());
    RowMatrix d_h = layer_norm_backward(d_fin, cache.final_norm, cache.final_rstd);

    for (std::size_t bi = ix.blocks.size(); bi-- > 0;) {
        const auto& blk = ix.blocks[bi];
        const auto& bc = cache.blocks[bi];
        RowVector d_mod(6 * dim);

        // MLP residual
        RowMatrix d_z = d_h.array().rowwise() * bc.gate2.array();
        d_mod.segment(5 * dim, dim) = (d_h.array() * bc.z.array()).colwise().sum();
        P[blk.fc2_w].grad.noalias() += bc.g.transpose() * d_z;
        P[blk.fc2_b].grad += d_z.colwise().sum();
        RowMatrix d_u = d_z * P[blk.fc2_w].value.transpose();
        d_u.array() *= gelu_grad(bc.u, bc.th).array();
        P[blk.fc1_w].grad.noalias() += bc.b.transpose() * d_u;
        P[blk.fc1_b].grad += d_u.colwise().sum();
        RowMatrix d_b = d_u * P[blk.fc1_w].value.transpose();
        d_mod.segment(3 * dim, dim) = d_b.colwise().sum();
        d_mod.segment(4 * dim, dim) = (d_b.array() * bc.n2.array()).colwise().sum();
        d_b.array().rowwise() *= (1.0 + bc.scale2.array());
        d_h += layer_norm_backward(d_b, bc.n2, bc.rstd2);

        // attention residual
        RowMatrix d_y = d_h.array().rowwise() * bc.gate1.array();
        d_mod.segment(2 * dim, dim) = (d_h.array() * bc.y.array()).colwise().sum();
        P[blk.w_o].grad.noalias() += bc.o.transpose() * d_y;
        const RowMatrix d_o = d_y * P[blk.w_o].value.transpose();
        RowMatrix d_q(x.rows(), dim), d_k(x.rows(), dim), d_v(x.rows(), dim);
        RowMatrix d_p, d_s;
        for (Eigen::Index hh = 0; hh < heads; ++hh) {
            const auto& p = bc.probs[static_cast<std::size_t>(hh)];
            const auto d_oh = d_o.middleCols(hh * hd, hd);
            d_p.noalias() = d_oh * bc.v.middleCols(hh * hd, hd).transpose();
            d_v.middleCols(hh * hd, hd).noalias() = p.transpose() * d_oh;
            const Eigen::VectorXd row_dot = (d_p.array() * p.array()).rowwise().sum();
            d_s = p.array() * (d_p.colwise() - row_dot).array();
            d_s *= inv_sqrt_d;
            d_q.middleCols(hh * hd, hd).noalias() = d_s * bc.k_rot.middleCols(hh * hd, hd);
            d_k.middleCols(hh * hd, hd).noalias() = d_s.transpose() * bc.q_rot.middleCols(hh * hd, hd);
        }
        rotate_heads(d_q.data(), tokens, cfg.num_heads, field, /*inverse=*/true);
        rotate_heads(d_k.data(), tokens, cfg.num_heads, field, /*inverse=*/true);
        P[blk.w_q].grad.noalias() += bc.a.transpose() * d_q;
        P[blk.w_k].grad.noalias() += bc.a.transpose() * d_k;
        P[blk.w_v].grad.noalias() += bc.a.transpose() * d_v;
        RowMatrix d_a = d_q * P[blk.w_q].value.transpose();
        d_a.noalias() += d_k * P[blk.w_k].value.transpose();
        d_a.noalias() += d_v * P[blk.w_v].value.transpose();
        d_mod.segment(0, dim) = d_a.colwise().sum();
        d_mod.segment(dim, dim) = (d_a.array() * bc.n1.array()).colwise().sum();
        d_a.array().rowwise() *= (1.0 + bc.scale1.array());
        d_h += layer_norm_backward(d_a, bc.n1, bc.rstd1);

        P[blk.mod_w].grad.noalias() += sc.transpose() * d_mod;
        P[blk.mod_b].grad += d_mod;
        d_sc.noalias() += d_mod * P[blk.mod_w].value.transpose();
    }

    P[ix.embed_w].grad.noalias() += x.transpose() * d_h;
    P[ix.embed_b].grad += d_h.colwise().sum();

    const auto& cond = cache.cond;
    RowVector d_c = d_sc.array() * cond.c.unaryExpr(&silu_grad).array();
    if (ix.class_embed) {
        auto& table = P[*ix.class_embed];
        const Eigen::Index row = label < 0 ? table.value.rows() - 1 : label;
        table.grad.row(row) += d_c;
    }
    P[ix.t_fc2_w].grad.noalias() += cond.act1.transpose() * d_c;
    P[ix.t_fc2_b].grad += d_c;
    RowVector d_pre1 = d_c * P[ix.t_fc2_w].value.transpose();
    d_pre1.array() *= cond.pre1.unaryExpr(&silu_grad).array();
    P[ix.t_fc1_w].grad.noalias() += cond.freq.transpose() * d_pre1;
    P[ix.t_fc1_b].grad += d_pre1;
}

RotaryField base_field(const ModelConfig& cfg) {
    return rotary_field(vanilla_indices(cfg.base_h, cfg.base_w), cfg.head_dim(), cfg.rope_base);
}

void check_example(const ToyDiT& model, const TrainExample& ex) {
    const auto& cfg = model.config();
    check_tokens(model, ex.noisy, ex.t);
    if (ex.noisy.height() != cfg.base_h || ex.noisy.width() != cfg.base_w ||
        !ex.noisy.same_shape(ex.target)) {
        throw std::invalid_argument("training examples must be at the base resolution");
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
        throw std::invalid_argument("model_dim must be a positive multiple of num_heads");
    }
    if (head_dim() % 4 != 0) {
        throw std::invalid_argument("head_dim (model_dim / num_heads) must be a multiple of 4");
    }
    if (num_blocks == 0 || mlp_ratio == 0 || patch_px == 0 || base_h == 0 || base_w == 0) {
        throw std::invalid_argument("model sizes must be >= 1");
    }
    if (!(rope_base > 1.0)) {
        throw std::invalid_argument("rope_base must be > 1");
    }
}

ToyDiT::ToyDiT(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const std::size_t d = config_.model_dim;
    const std::size_t p = config_.patch_dim();

    index_.embed_w = add("patch_embed.weight", p, d);
    index_.embed_b = add("patch_embed.bias", 1, d);
    index_.t_fc1_w = add("t_embed.fc1.weight", d, d);
    index_.t_fc1_b = add("t_embed.fc1.bias", 1, d);
    index_.t_fc2_w = add("t_embed.fc2.weight", d, d);
    index_.t_fc2_b = add("t_embed.fc2.bias", 1, d);
    if (config_.num_classes > 0) {
        index_.class_embed = add("class_embed", config_.num_classes + 1, d);
    }
    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        const std::string pre = "blocks." + std::to_string(b) + ".";
        Block blk{};
        blk.w_q = add(pre + "attn.w_q", d, d);
        blk.w_k = add(pre + "attn.w_k", d, d);
        blk.w_v = add(pre + "attn.w_v", d, d);
        blk.w_o = add(pre + "attn.w_o", d, d);
        blk.fc1_w = add(pre + "mlp.fc1.weight", d, config_.hidden_dim());
        blk.fc1_b = add(pre + "mlp.fc1.bias", 1, config_.hidden_dim());
        blk.fc2_w = add(pre + "mlp.fc2.weight", config_.hidden_dim(), d);
        blk.fc2_b = add(pre + "mlp.fc2.bias", 1, d);
        blk.mod_w = add(pre + "mod.weight", d, 6 * d);
        blk.mod_b = add(pre + "mod.bias", 1, 6 * d);
        index_.blocks.push_back(blk);
    }
    index_.final_mod_w = add("final.mod.weight", d, 2 * d);
    index_.final_mod_b = add("final.mod.bias", 1, 2 * d);
    index_.final_w = add("final.linear.weight", d, p);
    index_.final_b = add("final.linear.bias", 1, p);

    std::mt19937_64 rng(seed);
    auto xavier = [&](std::size_t i) {
        auto& m = params_[i].value;
        const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> dist(-a, a);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
    };
    auto normal = [&](std::size_t i, double stddev) {
        auto& m = params_[i].value;
        std::normal_distribution<double> dist(0.0, stddev);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
    };
    xavier(index_.embed_w);
    normal(index_.t_fc1_w, 0.02);
    normal(index_.t_fc2_w, 0.02);
    if (index_.class_embed) normal(*index_.class_embed, 0.02);
    for (const auto& blk : index_.blocks) {
        for (std::size_t i : {blk.w_q, blk.w_k, blk.w_v, blk.w_o, blk.fc1_w, blk.fc2_w}) {
            xavier(i);
        }
    }
}

std::size_t ToyDiT::add(std::string name, std::size_t rows, std::size_t cols) {
    const auto r = static_cast<Eigen::Index>(rows);
    const auto c = static_cast<Eigen::Index>(cols);
    params_.push_back(Parameter{std::move(name), RowMatrix::Zero(r, c), RowMatrix::Zero(r, c)});
    return params_.size() - 1;
}

std::size_t ToyDiT::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

AttentionWeights ToyDiT::attention_weights(std::size_t block) const {
    const auto& blk = index_.blocks.at(block);
    AttentionWeights w;
    w.num_heads = config_.num_heads;
    w.w_q = param(blk.w_q);
    w.w_k = param(blk.w_k);
    w.w_v = param(blk.w_v);
    w.w_o = param(blk.w_o);
    return w;
}

void ToyDiT::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

void ToyDiT::randomize(std::uint64_t seed, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& p : params_) {
        for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = dist(rng);
    }
}

TokenGrid forward(const ToyDiT& model, const TokenGrid& tokens, double t, BranchMode mode,
                  const BranchContext& ctx, int label) {
    check_tokens(model, tokens, t);
    const auto& cfg = model.config();
    const auto& ix = model.index();
    const auto dim = static_cast<Eigen::Index>(cfg.model_dim);
    const std::size_t gh = tokens.height(), gw = tokens.width();

    const Conditioning cond = conditioning(model, t, label);
    const RowVector& sc = cond.sc;

    TokenGrid h(gh, gw, cfg.model_dim);
    as_matrix(h) = as_matrix(tokens) * model.param(ix.embed_w);
    as_matrix(h).rowwise() += RowVector(model.param(ix.embed_b));

    Eigen::VectorXd rstd;
    for (std::size_t bi = 0; bi < ix.blocks.size(); ++bi) {
        const auto& blk = ix.blocks[bi];
        const RowVector mod = sc * model.param(blk.mod_w) + model.param(blk.mod_b);
        auto hm = as_matrix(h);

        TokenGrid a(gh, gw, cfg.model_dim);
        as_matrix(a) = modulate(layer_norm(hm, rstd), mod.segment(0, dim), mod.segment(dim, dim));
        const TokenGrid y = resdit_attention(a, model.attention_weights(bi), mode, ctx);
        hm.array() += as_matrix(y).array().rowwise() * mod.segment(2 * dim, dim).array();

        RowMatrix u = modulate(layer_norm(hm, rstd), mod.segment(3 * dim, dim),
                               mod.segment(4 * dim, dim)) *
                      model.param(blk.fc1_w);
        u.rowwise() += RowVector(model.param(blk.fc1_b));
        RowMatrix z = gelu(u, gelu_tanh(u)) * model.param(blk.fc2_w);
        z.rowwise() += RowVector(model.param(blk.fc2_b));
        hm.array() += z.array().rowwise() * mod.segment(5 * dim, dim).array();
    }

    const RowVector fmod = sc * model.param(ix.final_mod_w) + model.param(ix.final_mod_b);
    RowMatrix out = modulate(layer_norm(as_matrix(h), rstd), fmod.segment(0, dim),
                             fmod.segment(dim, dim)) *
                    model.param(ix.final_w);
    out.rowwise() += RowVector(model.param(ix.final_b));
    return to_grid(out, gh, gw);
}

TokenGrid forward_base(const ToyDiT& model, const TokenGrid& tokens, double t, int label) {
    const auto& cfg = model.config();
    BranchContext ctx = BranchContext::for_grid(tokens.height(), tokens.width(), cfg.base_h,
                                                cfg.base_w);
    ctx.global_pe = GlobalPE::Vanilla;
    ctx.rope_base = cfg.rope_base;
    return forward(model, tokens, t, BranchMode::Global, ctx, label);
}

double loss_and_grad(ToyDiT& model, const std::vector<TrainExample>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("loss_and_grad: empty batch");
    }
    const auto field = base_field(model.config());
    const double norm = 1.0 / static_cast<double>(batch.size() * batch[0].target.size());
    double loss = 0.0;
    ForwardCache cache;
    for (const auto& ex : batch) {
        check_example(model, ex);
        const auto x = as_matrix(ex.noisy);
        const RowMatrix diff = forward_cached(model, field, x, ex.t, ex.label, cache) -
                               as_matrix(ex.target);
        loss += diff.squaredNorm() * norm;
        backward(model, field, x, ex.label, cache, (2.0 * norm) * diff);
    }
    return loss;
}

double batch_loss(const ToyDiT& model, const std::vector<TrainExample>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_loss: empty batch");
    }
    const auto field = base_field(model.config());
    const double norm = 1.0 / static_cast<double>(batch.size() * batch[0].target.size());
    double loss = 0.0;
    ForwardCache cache;
    for (const auto& ex : batch) {
        check_example(model, ex);
        const RowMatrix diff = forward_cached(model, field, as_matrix(ex.noisy), ex.t, ex.label,
                                              cache) -
                               as_matrix(ex.target);
        loss += diff.squaredNorm() * norm;
    }
    return loss;
}

TokenGrid patchify(const TokenGrid& image, std::size_t patch_px) {
    if (image.channels() != 1 || patch_px == 0 || image.height() % patch_px != 0 ||
        image.width() % patch_px != 0) {
        throw std::invalid_argument("patchify: single-channel image with dims divisible by patch size required");
    }
    TokenGrid tokens(image.height() / patch_px, image.width() / patch_px, patch_px * patch_px);
    for (std::size_t r = 0; r < image.height(); ++r) {
        for (std::size_t c = 0; c < image.width(); ++c) {
            tokens.at(r / patch_px, c / patch_px, (r % patch_px) * patch_px + c % patch_px) =
                image.at(r, c, 0);
        }
    }
    return tokens;
}

TokenGrid unpatchify(const TokenGrid& tokens, std::size_t patch_px) {
    if (patch_px == 0 || tokens.channels() != patch_px * patch_px) {
        throw std::invalid_argument("unpatchify: channels must equal patch_px^2");
    }
    TokenGrid image(tokens.height() * patch_px, tokens.width() * patch_px, 1);
    for (std::size_t r = 0; r < image.height(); ++r) {
        for (std::size_t c = 0; c < image.width(); ++c) {
            image.at(r, c, 0) =
                tokens.at(r / patch_px, c / patch_px, (r % patch_px) * patch_px + c % patch_px);
        }
    }
    return image;
}

}  // namespace resdit
