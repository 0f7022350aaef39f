#include "eopt/tape.hpp"

#include <cmath>
#include <memory>

namespace eopt {

namespace {
constexpr float kLayerNormEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
constexpr float kTanhClamp = 4.97f;

// [7/6] Pade approximant of tanh, clamped where it saturates; accurate to
// ~1e-7 mid-range and vectorizes where libm tanhf does not
inline float fast_tanh(float v) {
    v = v < -kTanhClamp ? -kTanhClamp : (v > kTanhClamp ? kTanhClamp : v);
    const float v2 = v * v;
    const float p = v * (135135.0f + v2 * (17325.0f + v2 * (378.0f + v2)));
    const float q = 135135.0f + v2 * (62370.0f + v2 * (3150.0f + v2 * 28.0f));
    return p / q;
}

}  // namespace

float gelu_scalar(float x) {
    const float t = fast_tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5f * x * (1.0f + t);
}

double huber_mean(const float* pred, const float* target, int64_t n, double delta) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double r = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        double a = std::fabs(r);
        acc += (a <= delta) ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }
    return acc / static_cast<double>(n);
}

void causal_softmax_rows(float* scores, int64_t t) {
    for (int64_t i = 0; i < t; ++i) {
        float* row = scores + i * t;
        float mx = row[0];
        for (int64_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j <= i; ++j) row[j] *= inv;
        for (int64_t j = i + 1; j < t; ++j) row[j] = 0.0f;
    }
}

NodeId Tape::push(Tensor value, bool wants_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = wants_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::accumulate(NodeId id, const float* g, int64_t n) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.data.empty()) node.grad = Tensor::zeros(node.value.shape);
    float* dst = node.grad.data.data();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

const Tensor& Tape::grad(NodeId id) const {
    const Node& n = nodes_[id];
    if (!n.requires_grad) throw DimensionError("gradient requested for a non-differentiable node");
    return n.grad;
}

double Tape::scalar(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.has_scalar_acc) return n.scalar_acc;
    if (n.value.numel() != 1)
        throw DimensionError("scalar() on a non-scalar node of shape " + n.value.shape_str());
    return static_cast<double>(n.value.data[0]);
}

NodeId Tape::input(Tensor value) { return push(std::move(value), true, nullptr); }

NodeId Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (tb.rank() != 2 || ta.rank() < 2 || ta.cols() != tb.dim(0))
        throw DimensionError("matmul shape mismatch: " + ta.shape_str() + " x " + tb.shape_str());
    const int64_t m = ta.rows(), k = ta.cols(), n = tb.dim(1);
    std::vector<int64_t> out_shape(ta.shape.begin(), ta.shape.end() - 1);
    out_shape.push_back(n);
    Tensor out(std::move(out_shape));
    gemm_accum(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);

    bool req = nodes_[a].requires_grad || nodes_[b].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, a, b, m, k, n](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        const Tensor& va = t.nodes_[a].value;
        const Tensor& vb = t.nodes_[b].value;
        if (t.nodes_[a].requires_grad) {
            // dA = g . B^T
            std::vector<float> bt(static_cast<size_t>(k * n));
            transpose(vb.data.data(), bt.data(), k, n);
            std::vector<float> da(static_cast<size_t>(m * k), 0.0f);
            gemm_accum(g, bt.data(), da.data(), m, n, k);
            t.accumulate(a, da.data(), m * k);
        }
        if (t.nodes_[b].requires_grad) {
            // dB = A^T . g
            std::vector<float> at(static_cast<size_t>(m * k));
            transpose(va.data.data(), at.data(), m, k);
            std::vector<float> db(static_cast<size_t>(k * n), 0.0f);
            gemm_accum(at.data(), g, db.data(), k, m, n);
            t.accumulate(b, db.data(), k * n);
        }
    };
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (!ta.same_shape(tb))
        throw DimensionError("add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data[i] += tb.data[i];

    bool req = nodes_[a].requires_grad || nodes_[b].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, a, b, n](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        t.accumulate(a, g, n);
        t.accumulate(b, g, n);
    };
    return id;
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tb = nodes_[bias].value;
    if (tb.rank() != 1 || tb.dim(0) != tx.cols())
        throw DimensionError("bias shape mismatch: " + tx.shape_str() + " + " + tb.shape_str());
    const int64_t rows = tx.rows(), n = tx.cols();
    Tensor out = tx;
    for (int64_t i = 0; i < rows; ++i) {
        float* row = out.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j) row[j] += tb.data[j];
    }

    bool req = nodes_[x].requires_grad || nodes_[bias].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, x, bias, rows, n](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        t.accumulate(x, g, rows * n);
        if (t.nodes_[bias].requires_grad) {
            std::vector<float> db(static_cast<size_t>(n), 0.0f);
            for (int64_t i = 0; i < rows; ++i) {
                const float* row = g + i * n;
                for (int64_t j = 0; j < n; ++j) db[j] += row[j];
            }
            t.accumulate(bias, db.data(), n);
        }
    };
    return id;
}

NodeId Tape::add_time(NodeId x, NodeId table) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tp = nodes_[table].value;
    if (tx.rank() < 2 || tx.rank() > 3 || tp.rank() != 2)
        throw DimensionError("add_time expects x [B,T,E] or [T,E] and table [P,E], got " +
                             tx.shape_str() + " + " + tp.shape_str());
    const int64_t batch = tx.rank() == 3 ? tx.dim(0) : 1;
    const int64_t steps = tx.rank() == 3 ? tx.dim(1) : tx.dim(0);
    const int64_t width = tx.cols();
    if (tp.dim(1) != width || tp.dim(0) < steps)
        throw DimensionError("time table too small: " + tp.shape_str() + " for x " + tx.shape_str());
    Tensor out = tx;
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t s = 0; s < steps; ++s) {
            float* row = out.data.data() + (b * steps + s) * width;
            const float* prow = tp.data.data() + s * width;
            for (int64_t j = 0; j < width; ++j) row[j] += prow[j];
        }

    bool req = nodes_[x].requires_grad || nodes_[table].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, x, table, batch, steps, width](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        t.accumulate(x, g, batch * steps * width);
        if (t.nodes_[table].requires_grad) {
            std::vector<float> dt(t.nodes_[table].value.data.size(), 0.0f);
            for (int64_t b = 0; b < batch; ++b)
                for (int64_t s = 0; s < steps; ++s) {
                    const float* row = g + (b * steps + s) * width;
                    float* drow = dt.data() + s * width;
                    for (int64_t j = 0; j < width; ++j) drow[j] += row[j];
                }
            t.accumulate(table, dt.data(), static_cast<int64_t>(dt.size()));
        }
    };
    return id;
}

NodeId Tape::gelu(NodeId x) {
    const Tensor& tx = nodes_[x].value;
    Tensor out(tx.shape);
    const int64_t n = tx.numel();
    // tanh values are stashed so the backward pass avoids recomputing them
    auto tanhs = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
    {
        const float* __restrict xp = tx.data.data();
        float* __restrict th = tanhs->data();
        float* __restrict op = out.data.data();
        for (int64_t i = 0; i < n; ++i) {
            const float xv = xp[i];
            th[i] = fast_tanh(kGeluC * (xv + kGeluA * xv * xv * xv));
            op[i] = 0.5f * xv * (1.0f + th[i]);
        }
    }

    bool req = nodes_[x].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, x, n, tanhs](Tape& t) {
        const float* __restrict g = t.nodes_[id].grad.data.data();
        const float* __restrict xv = t.nodes_[x].value.data.data();
        const float* __restrict th = tanhs->data();
        std::vector<float> dx(static_cast<size_t>(n));
        float* __restrict dp = dx.data();
        for (int64_t i = 0; i < n; ++i) {
            const float xd = xv[i];
            const float u = kGeluC * (xd + kGeluA * xd * xd * xd);
            // the tanh saturates at the clamp, so its derivative is 0 there
            const float sech2 = (u > -kTanhClamp && u < kTanhClamp) ? 1.0f - th[i] * th[i] : 0.0f;
            const float du = kGeluC * (1.0f + 3.0f * kGeluA * xd * xd);
            dp[i] = (0.5f * (1.0f + th[i]) + 0.5f * xd * sech2 * du) * g[i];
        }
        t.accumulate(x, dx.data(), n);
    };
    return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tg = nodes_[gain].value;
    const Tensor& tb = nodes_[bias].value;
    const int64_t width = tx.cols(), rows = tx.rows();
    if (width < 2) throw DimensionError("layer_norm over a degenerate row of width " +
                                        std::to_string(width) + " (need >= 2)");
    if (tg.numel() != width || tb.numel() != width)
        throw DimensionError("layer_norm gain/bias must have width " + std::to_string(width));

    auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(rows * width));
    auto rstd = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    Tensor out(tx.shape);
    for (int64_t i = 0; i < rows; ++i) {
        const float* row = tx.data.data() + i * width;
        double mean = 0.0;
        for (int64_t j = 0; j < width; ++j) mean += row[j];
        mean /= width;
        double var = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            double d = row[j] - mean;
            var += d * d;
        }
        var /= width;
        const float r = static_cast<float>(1.0 / std::sqrt(var + kLayerNormEps));
        (*rstd)[i] = r;
        float* xh = xhat->data() + i * width;
        float* orow = out.data.data() + i * width;
        for (int64_t j = 0; j < width; ++j) {
            xh[j] = (row[j] - static_cast<float>(mean)) * r;
            orow[j] = xh[j] * tg.data[j] + tb.data[j];
        }
    }

    bool req = nodes_[x].requires_grad || nodes_[gain].requires_grad || nodes_[bias].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, x, gain, bias, rows, width, xhat, rstd](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        const float* gn = t.nodes_[gain].value.data.data();
        std::vector<float> dx(static_cast<size_t>(rows * width));
        std::vector<float> dgain(static_cast<size_t>(width), 0.0f);
        std::vector<float> dbias(static_cast<size_t>(width), 0.0f);
        for (int64_t i = 0; i < rows; ++i) {
            const float* grow = g + i * width;
            const float* xh = xhat->data() + i * width;
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t j = 0; j < width; ++j) {
                double dxh = static_cast<double>(grow[j]) * gn[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[j];
                dgain[j] += grow[j] * xh[j];
                dbias[j] += grow[j];
            }
            const double m1 = sum_dxhat / width;
            const double m2 = sum_dxhat_xhat / width;
            const double r = (*rstd)[i];
            float* dxrow = dx.data() + i * width;
            for (int64_t j = 0; j < width; ++j) {
                double dxh = static_cast<double>(grow[j]) * gn[j];
                dxrow[j] = static_cast<float>(r * (dxh - m1 - xh[j] * m2));
            }
        }
        t.accumulate(x, dx.data(), rows * width);
        t.accumulate(gain, dgain.data(), width);
        t.accumulate(bias, dbias.data(), width);
    };
    return id;
}

NodeId Tape::slice_cols(NodeId x, int64_t begin, int64_t end) {
    const Tensor& tx = nodes_[x].value;
    const int64_t width = tx.cols(), rows = tx.rows();
    if (begin < 0 || end > width || begin >= end)
        throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for " + tx.shape_str());
    const int64_t n = end - begin;
    std::vector<int64_t> out_shape = tx.shape;
    out_shape.back() = n;
    Tensor out(std::move(out_shape));
    for (int64_t i = 0; i < rows; ++i) {
        const float* src = tx.data.data() + i * width + begin;
        float* dst = out.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j) dst[j] = src[j];
    }

    bool req = nodes_[x].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, x, begin, rows, width, n](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        std::vector<float> dx(static_cast<size_t>(rows * width), 0.0f);
        for (int64_t i = 0; i < rows; ++i) {
            const float* src = g + i * n;
            float* dst = dx.data() + i * width + begin;
            for (int64_t j = 0; j < n; ++j) dst[j] = src[j];
        }
        t.accumulate(x, dx.data(), rows * width);
    };
    return id;
}

NodeId Tape::causal_attention(NodeId q, NodeId k, NodeId v, int n_head) {
    const Tensor& tq = nodes_[q].value;
    const Tensor& tk = nodes_[k].value;
    const Tensor& tv = nodes_[v].value;
    if (!tq.same_shape(tk) || !tq.same_shape(tv))
        throw DimensionError("attention q/k/v shapes disagree: " + tq.shape_str() + ", " +
                             tk.shape_str() + ", " + tv.shape_str());
    if (tq.rank() < 2 || tq.rank() > 3)
        throw DimensionError("attention expects [B,T,D] or [T,D], got " + tq.shape_str());
    const int64_t batch = tq.rank() == 3 ? tq.dim(0) : 1;
    const int64_t steps = tq.rank() == 3 ? tq.dim(1) : tq.dim(0);
    const int64_t width = tq.cols();
    if (n_head < 1 || width % n_head != 0)
        throw ConfigError("attention width " + std::to_string(width) +
                          " not divisible by n_head " + std::to_string(n_head));
    const int64_t hd = width / n_head;
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(hd)));

    // softmax probabilities are stashed for the backward pass
    auto probs = std::make_shared<std::vector<float>>(
        static_cast<size_t>(batch * n_head * steps * steps));
    Tensor out(tq.shape);

    std::vector<float> qh(static_cast<size_t>(steps * hd));
    std::vector<float> kht(static_cast<size_t>(hd * steps));
    std::vector<float> vh(static_cast<size_t>(steps * hd));
    std::vector<float> oh(static_cast<size_t>(steps * hd));
    for (int64_t b = 0; b < batch; ++b) {
        for (int h = 0; h < n_head; ++h) {
            const int64_t off = h * hd;
            for (int64_t s = 0; s < steps; ++s) {
                const int64_t base = (b * steps + s) * width + off;
                for (int64_t j = 0; j < hd; ++j) {
                    qh[s * hd + j] = tq.data[base + j] * scale;
                    kht[j * steps + s] = tk.data[base + j];
                    vh[s * hd + j] = tv.data[base + j];
                }
            }
            float* p = probs->data() + (b * n_head + h) * steps * steps;
            std::fill(p, p + steps * steps, 0.0f);
            gemm_accum(qh.data(), kht.data(), p, steps, hd, steps);
            causal_softmax_rows(p, steps);
            std::fill(oh.begin(), oh.end(), 0.0f);
            gemm_accum(p, vh.data(), oh.data(), steps, steps, hd);
            for (int64_t s = 0; s < steps; ++s) {
                const int64_t base = (b * steps + s) * width + off;
                for (int64_t j = 0; j < hd; ++j) out.data[base + j] = oh[s * hd + j];
            }
        }
    }

    bool req = nodes_[q].requires_grad || nodes_[k].requires_grad || nodes_[v].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    if (!req) return id;
    nodes_[id].backprop = [id, q, k, v, n_head, batch, steps, width, hd, scale, probs](Tape& t) {
        const float* g = t.nodes_[id].grad.data.data();
        const Tensor& tq2 = t.nodes_[q].value;
        const Tensor& tk2 = t.nodes_[k].value;
        const Tensor& tv2 = t.nodes_[v].value;
        std::vector<float> dq(tq2.data.size(), 0.0f);
        std::vector<float> dk(tq2.data.size(), 0.0f);
        std::vector<float> dv(tq2.data.size(), 0.0f);

        std::vector<float> qh(static_cast<size_t>(steps * hd));
        std::vector<float> kh(static_cast<size_t>(steps * hd));
        std::vector<float> vht(static_cast<size_t>(hd * steps));
        std::vector<float> goh(static_cast<size_t>(steps * hd));
        std::vector<float> pt(static_cast<size_t>(steps * steps));
        std::vector<float> ds(static_cast<size_t>(steps * steps));
        std::vector<float> dzt(static_cast<size_t>(steps * steps));
        std::vector<float> dqh(static_cast<size_t>(steps * hd));
        std::vector<float> dkh(static_cast<size_t>(steps * hd));
        std::vector<float> dvh(static_cast<size_t>(steps * hd));
        for (int64_t b = 0; b < batch; ++b) {
            for (int h = 0; h < n_head; ++h) {
                const int64_t off = h * hd;
                for (int64_t s = 0; s < steps; ++s) {
                    const int64_t base = (b * steps + s) * width + off;
                    for (int64_t j = 0; j < hd; ++j) {
                        qh[s * hd + j] = tq2.data[base + j];
                        kh[s * hd + j] = tk2.data[base + j];
                        vht[j * steps + s] = tv2.data[base + j];
                        goh[s * hd + j] = g[base + j];
                    }
                }
                const float* p = probs->data() + (b * n_head + h) * steps * steps;
                // dV = P^T . gO
                transpose(p, pt.data(), steps, steps);
                std::fill(dvh.begin(), dvh.end(), 0.0f);
                gemm_accum(pt.data(), goh.data(), dvh.data(), steps, steps, hd);
                // dS = gO . V^T, then softmax backward within each row
                std::fill(ds.begin(), ds.end(), 0.0f);
                gemm_accum(goh.data(), vht.data(), ds.data(), steps, hd, steps);
                for (int64_t i = 0; i < steps; ++i) {
                    const float* pr = p + i * steps;
                    float* dsr = ds.data() + i * steps;
                    double dot = 0.0;
                    for (int64_t j = 0; j <= i; ++j) dot += static_cast<double>(dsr[j]) * pr[j];
                    for (int64_t j = 0; j <= i; ++j)
                        dsr[j] = static_cast<float>((dsr[j] - dot) * pr[j]);
                    for (int64_t j = i + 1; j < steps; ++j) dsr[j] = 0.0f;
                }
                // dQ = dZ . K * scale ; dK = dZ^T . Q * scale
                std::fill(dqh.begin(), dqh.end(), 0.0f);
                gemm_accum(ds.data(), kh.data(), dqh.data(), steps, steps, hd);
                transpose(ds.data(), dzt.data(), steps, steps);
                std::fill(dkh.begin(), dkh.end(), 0.0f);
                gemm_accum(dzt.data(), qh.data(), dkh.data(), steps, steps, hd);
                for (int64_t s = 0; s < steps; ++s) {
                    const int64_t base = (b * steps + s) * width + off;
                    for (int64_t j = 0; j < hd; ++j) {
                        dq[base + j] += dqh[s * hd + j] * scale;
                        dk[base + j] += dkh[s * hd + j] * scale;
                        dv[base + j] += dvh[s * hd + j];
                    }
                }
            }
        }
        const int64_t n = static_cast<int64_t>(dq.size());
        t.accumulate(q, dq.data(), n);
        t.accumulate(k, dk.data(), n);
        t.accumulate(v, dv.data(), n);
    };
    return id;
}

NodeId Tape::huber(NodeId pred, NodeId target, double delta) {
    const Tensor& tp = nodes_[pred].value;
    const Tensor& tt = nodes_[target].value;
    if (!tp.same_shape(tt))
        throw DimensionError("huber shape mismatch: " + tp.shape_str() + " vs " + tt.shape_str());
    if (delta <= 0.0) throw ConfigError("huber delta must be > 0");
    const int64_t n = tp.numel();
    const double acc = huber_mean(tp.data.data(), tt.data.data(), n, delta);
    Tensor out({1});
    out.data[0] = static_cast<float>(acc);

    bool req = nodes_[pred].requires_grad || nodes_[target].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    nodes_[id].scalar_acc = acc;
    nodes_[id].has_scalar_acc = true;
    if (!req) return id;
    nodes_[id].backprop = [id, pred, target, delta, n](Tape& t) {
        const float g = t.nodes_[id].grad.data[0];
        const float* p = t.nodes_[pred].value.data.data();
        const float* tg = t.nodes_[target].value.data.data();
        std::vector<float> dp(static_cast<size_t>(n));
        const float inv_n = 1.0f / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i) {
            double r = static_cast<double>(p[i]) - static_cast<double>(tg[i]);
            double d = (std::fabs(r) <= delta) ? r : (r > 0 ? delta : -delta);
            dp[i] = static_cast<float>(d) * inv_n * g;
        }
        t.accumulate(pred, dp.data(), n);
        if (t.nodes_[target].requires_grad) {
            for (auto& x : dp) x = -x;
            t.accumulate(target, dp.data(), n);
        }
    };
    return id;
}

NodeId Tape::sum(NodeId x) {
    const Tensor& tx = nodes_[x].value;
    const int64_t n = tx.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += tx.data[i];
    Tensor out({1});
    out.data[0] = static_cast<float>(acc);

    bool req = nodes_[x].requires_grad;
    NodeId id = push(std::move(out), req, nullptr);
    nodes_[id].scalar_acc = acc;
    nodes_[id].has_scalar_acc = true;
    if (!req) return id;
    nodes_[id].backprop = [id, x, n](Tape& t) {
        const float g = t.nodes_[id].grad.data[0];
        std::vector<float> dx(static_cast<size_t>(n), g);
        t.accumulate(x, dx.data(), n);
    };
    return id;
}

void Tape::backward(NodeId root) {
    if (nodes_[root].value.numel() != 1)
        throw DimensionError("backward root must be scalar, got " +
                             nodes_[root].value.shape_str());
    if (!nodes_[root].requires_grad)
        throw DimensionError("backward root does not depend on any differentiable input");
    nodes_[root].grad = Tensor::full({1}, 1.0f);
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || !n.backprop) continue;
        if (n.grad.data.empty()) continue;  // not reachable from root
        n.backprop(*this);
    }
}

NodeId causal_self_attention(Tape& tape, NodeId x, const AttentionWeights& w, int n_head) {
    const int64_t width = tape.value(x).cols();
    NodeId qkv = tape.add_bias(tape.matmul(x, w.qkv_w), w.qkv_b);
    NodeId q = tape.slice_cols(qkv, 0, width);
    NodeId k = tape.slice_cols(qkv, width, 2 * width);
    NodeId v = tape.slice_cols(qkv, 2 * width, 3 * width);
    NodeId att = tape.causal_attention(q, k, v, n_head);
    return tape.add_bias(tape.matmul(att, w.proj_w), w.proj_b);
}

}  // namespace eopt
