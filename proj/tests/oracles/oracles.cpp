#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

namespace {

long centered(std::size_t i, std::size_t n) {
    return static_cast<long>(i) - static_cast<long>(n / 2);
}

}  // namespace

std::vector<Complex> dft2(const TokenGrid& x) {
    const std::size_t R = x.height(), C = x.width(), K = x.channels();
    std::vector<Complex> out(R * C * K);
    for (std::size_t u = 0; u < R; ++u) {
        for (std::size_t v = 0; v < C; ++v) {
            const double fu = static_cast<double>(centered(u, R));
            const double fv = static_cast<double>(centered(v, C));
            for (std::size_t c = 0; c < K; ++c) {
                Complex acc = 0.0;
                for (std::size_t r = 0; r < R; ++r) {
                    for (std::size_t s = 0; s < C; ++s) {
                        const double phase = -2.0 * std::numbers::pi *
                                             (fu * static_cast<double>(r) / static_cast<double>(R) +
                                              fv * static_cast<double>(s) / static_cast<double>(C));
                        acc += x.at(r, s, c) * std::polar(1.0, phase);
                    }
                }
                out[(u * C + v) * K + c] = acc;
            }
        }
    }
    return out;
}

std::vector<Complex> idft2(const std::vector<Complex>& spec, std::size_t R, std::size_t C,
                           std::size_t K) {
    std::vector<Complex> out(R * C * K);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t s = 0; s < C; ++s) {
            for (std::size_t c = 0; c < K; ++c) {
                Complex acc = 0.0;
                for (std::size_t u = 0; u < R; ++u) {
                    for (std::size_t v = 0; v < C; ++v) {
                        const double phase =
                            2.0 * std::numbers::pi *
                            (static_cast<double>(centered(u, R)) * static_cast<double>(r) /
                                 static_cast<double>(R) +
                             static_cast<double>(centered(v, C)) * static_cast<double>(s) /
                                 static_cast<double>(C));
                        acc += spec[(u * C + v) * K + c] * std::polar(1.0, phase);
                    }
                }
                out[(r * C + s) * K + c] = acc / static_cast<double>(R * C);
            }
        }
    }
    return out;
}

std::vector<int> radial_mask(std::size_t R, std::size_t C, double cutoff) {
    std::vector<int> m(R * C);
    const double ur = static_cast<double>(R) / 2.0, vr = static_cast<double>(C) / 2.0;
    for (std::size_t u = 0; u < R; ++u) {
        for (std::size_t v = 0; v < C; ++v) {
            // A length-1 axis only carries DC.
            const double a = R > 1 ? static_cast<double>(centered(u, R)) / ur : 0.0;
            const double b = C > 1 ? static_cast<double>(centered(v, C)) / vr : 0.0;
            m[u * C + v] = (a * a + b * b <= cutoff * cutoff) ? 1 : 0;
        }
    }
    return m;
}

std::vector<std::size_t> starts(std::size_t length, std::size_t patch, std::size_t n) {
    if (n == 1) return {0};
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * static_cast<double>(length - patch) /
                         static_cast<double>(n - 1);
        out.push_back(static_cast<std::size_t>(std::round(t)));
    }
    return out;
}

TokenGrid splice(const std::vector<TokenGrid>& patches, const std::vector<resdit::Window>& windows,
                 double sr, double sc, std::size_t H, std::size_t W) {
    const std::size_t K = patches.at(0).channels();
    TokenGrid out(H, W, K);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            std::vector<double> num(K, 0.0);
            double den = 0.0;
            for (std::size_t i = 0; i < windows.size(); ++i) {
                const auto& w = windows[i];
                if (r < w.row_start || r >= w.row_start + w.height || c < w.col_start ||
                    c >= w.col_start + w.width) {
                    continue;
                }
                const double cr = static_cast<double>(w.row_start) + (w.height - 1.0) / 2.0;
                const double cc = static_cast<double>(w.col_start) + (w.width - 1.0) / 2.0;
                const double dr = (static_cast<double>(r) - cr) / sr;
                const double dc = (static_cast<double>(c) - cc) / sc;
                const double wt = std::exp(-0.5 * (dr * dr + dc * dc));
                den += wt;
                for (std::size_t k = 0; k < K; ++k) {
                    num[k] += wt * patches[i].at(r - w.row_start, c - w.col_start, k);
                }
            }
            if (den == 0.0) throw std::logic_error("oracle splice: uncovered token");
            for (std::size_t k = 0; k < K; ++k) out.at(r, c, k) = num[k] / den;
        }
    }
    return out;
}

TokenGrid attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                    std::size_t heads) {
    const std::size_t H = q.height(), W = q.width(), D = q.channels(), d = D / heads;
    const std::size_t T = H * W;
    const double* Q = q.data().data();
    const double* Kd = k.data().data();
    const double* V = v.data().data();
    TokenGrid out(H, W, D);
    double* O = out.data().data();
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < T; ++i) {
            std::vector<double> s(T);
            double mx = -INFINITY;
            for (std::size_t j = 0; j < T; ++j) {
                double dot = 0.0;
                for (std::size_t e = 0; e < d; ++e) dot += Q[i * D + h * d + e] * Kd[j * D + h * d + e];
                s[j] = dot / std::sqrt(static_cast<double>(d));
                mx = std::max(mx, s[j]);
            }
            double z = 0.0;
            for (double& x : s) z += (x = std::exp(x - mx));
            for (std::size_t e = 0; e < d; ++e) {
                double acc = 0.0;
                for (std::size_t j = 0; j < T; ++j) acc += s[j] / z * V[j * D + h * d + e];
                O[i * D + h * d + e] = acc;
            }
        }
    }
    return out;
}

TokenGrid project(const TokenGrid& x, const resdit::RowMatrix& w) {
    const auto in = static_cast<std::size_t>(w.rows()), outc = static_cast<std::size_t>(w.cols());
    if (x.channels() != in) throw std::invalid_argument("oracle project: shape");
    TokenGrid out(x.height(), x.width(), outc);
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            for (std::size_t o = 0; o < outc; ++o) {
                double acc = 0.0;
                for (std::size_t i = 0; i < in; ++i) {
                    acc += x.at(r, c, i) * w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
                }
                out.at(r, c, o) = acc;
            }
        }
    }
    return out;
}

TokenGrid rope(const TokenGrid& x, std::size_t heads, const std::vector<double>& pos_h,
               const std::vector<double>& pos_w, double base) {
    const std::size_t D = x.channels(), d = D / heads, nf = d / 4;
    TokenGrid out = x;
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            const std::size_t t = r * x.width() + c;
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t k = 0; k < d / 2; ++k) {
                    const double p = (k < nf) ? pos_h[t] : pos_w[t];
                    const double j = static_cast<double>(k % nf);
                    const double angle = p * std::pow(base, -4.0 * j / static_cast<double>(d));
                    const std::size_t a = h * d + 2 * k, b = a + 1;
                    const double x0 = x.at(r, c, a), x1 = x.at(r, c, b);
                    out.at(r, c, a) = x0 * std::cos(angle) - x1 * std::sin(angle);
                    out.at(r, c, b) = x0 * std::sin(angle) + x1 * std::cos(angle);
                }
            }
        }
    }
    return out;
}

TokenGrid rotary_attention(const TokenGrid& x, const resdit::AttentionWeights& w,
                           const std::vector<double>& pos_h, const std::vector<double>& pos_w,
                           double base) {
    const TokenGrid q = rope(project(x, w.w_q), w.num_heads, pos_h, pos_w, base);
    const TokenGrid k = rope(project(x, w.w_k), w.num_heads, pos_h, pos_w, base);
    const TokenGrid v = project(x, w.w_v);
    return project(oracle::attention(q, k, v, w.num_heads), w.w_o);
}

TokenGrid global_branch(const TokenGrid& x, const resdit::AttentionWeights& w, std::size_t bh,
                        std::size_t bw) {
    std::vector<double> ph, pw;
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            ph.push_back(static_cast<double>(r) * static_cast<double>(bh) /
                         static_cast<double>(x.height()));
            pw.push_back(static_cast<double>(c) * static_cast<double>(bw) /
                         static_cast<double>(x.width()));
        }
    }
    return rotary_attention(x, w, ph, pw);
}

TokenGrid crop(const TokenGrid& x, const resdit::Window& w) {
    TokenGrid out(w.height, w.width, x.channels());
    for (std::size_t r = 0; r < w.height; ++r) {
        for (std::size_t c = 0; c < w.width; ++c) {
            for (std::size_t k = 0; k < x.channels(); ++k) {
                out.at(r, c, k) = x.at(w.row_start + r, w.col_start + c, k);
            }
        }
    }
    return out;
}

std::vector<TokenGrid> local_patches(const TokenGrid& x, const resdit::AttentionWeights& w,
                                     const std::vector<resdit::Window>& windows) {
    std::vector<TokenGrid> out;
    for (const auto& win : windows) {
        std::vector<double> ph, pw;
        for (std::size_t r = 0; r < win.height; ++r) {
            for (std::size_t c = 0; c < win.width; ++c) {
                ph.push_back(static_cast<double>(r));
                pw.push_back(static_cast<double>(c));
            }
        }
        out.push_back(rotary_attention(crop(x, win), w, ph, pw));
    }
    return out;
}

TokenGrid spectral_fusion(const TokenGrid& global, const std::vector<TokenGrid>& local,
                          const std::vector<resdit::Window>& windows, double cutoff, double sr,
                          double sc) {
    std::vector<TokenGrid> fused;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& win = windows[i];
        const auto g = dft2(crop(global, win));
        const auto l = dft2(local[i]);
        const auto m = radial_mask(win.height, win.width, cutoff);
        const std::size_t K = global.channels();
        std::vector<Complex> mixed(g.size());
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            mixed[idx] = m[idx / K] ? g[idx] : l[idx];
        }
        const auto back = idft2(mixed, win.height, win.width, K);
        TokenGrid patch(win.height, win.width, K);
        for (std::size_t idx = 0; idx < back.size(); ++idx) patch.data()[idx] = back[idx].real();
        fused.push_back(std::move(patch));
    }
    return splice(fused, windows, sr, sc, global.height(), global.width());
}

}  // namespace oracle
