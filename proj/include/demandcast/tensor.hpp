#pragma once

// Dense 64-bit tensor math with tape-based reverse-mode differentiation.
// Exactly the primitives the forecaster needs: matmul, elementwise ops,
// masked softmax, layer norm, dropout, embedding lookup, and Adam.
//
// All shaped ops work on 2-D row-major matrices; scalars are 1x1. The tape
// owns every intermediate tensor of one forward pass and is discarded (or
// reset) after backward, so tensors are immutable once written by an op.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "demandcast/rng.hpp"

namespace demandcast {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // same length as values when tracked

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
        if (numel() != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor: shape/value length mismatch");
    }

    static Tensor zeros(std::vector<int> s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor matrix(int r, int c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }
    static Tensor row(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor({1, n}, std::move(v));
    }
    static Tensor col(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor({n, 1}, std::move(v));
    }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rows() const { return shape.size() == 2 ? shape[0] : 0; }
    int cols() const { return shape.size() == 2 ? shape[1] : 0; }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

namespace detail {

// C += A(m x k) * B(k x n)
inline void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A(m x k) * B(n x k)^T
inline void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C += A(k x m)^T * B(k x n)
inline void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<size_t>(p) * m;
        const double* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

class Tape {
public:
    struct Ref {
        int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }

    const Tensor& value(Ref r) const { return node(r).t; }
    const std::vector<double>& grad(Ref r) const { return node(r).t.grad; }

    Ref leaf(Tensor t) {
        if (!grad_enabled_) t.requires_grad = false;
        if (t.requires_grad) t.grad.assign(t.values.size(), 0.0);
        nodes_.push_back(Node{std::move(t), nullptr});
        return Ref{static_cast<int32_t>(nodes_.size() - 1)};
    }
    Ref constant(Tensor t) {
        t.requires_grad = false;
        return leaf(std::move(t));
    }

    // ---- binary / elementwise ----

    Ref matmul(Ref a, Ref b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require2d(ta, "matmul lhs");
        require2d(tb, "matmul rhs");
        if (ta.cols() != tb.rows())
            throw std::invalid_argument("matmul: inner dimensions disagree: " + ta.shape_str() + " vs " +
                                        tb.shape_str());
        const int m = ta.rows(), k = ta.cols(), n = tb.cols();
        Tensor out = Tensor::zeros({m, n});
        detail::mm_nn(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
        return record(std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            Node& na = tp.node(a);
            Node& nb = tp.node(b);
            if (na.t.requires_grad) detail::mm_nt(g.data(), nb.t.values.data(), na.t.grad.data(), m, n, k);
            if (nb.t.requires_grad) detail::mm_tn(na.t.values.data(), g.data(), nb.t.grad.data(), k, m, n);
        });
    }

    Ref transpose(Ref a) {
        const Tensor& ta = value(a);
        require2d(ta, "transpose");
        const int m = ta.rows(), n = ta.cols();
        Tensor out = Tensor::zeros({n, m});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
        return record(std::move(out), {a}, [a, m, n](Tape& tp, Ref o) {
            Node& na = tp.node(a);
            if (!na.t.requires_grad) return;
            const Tensor& go = tp.node(o).t;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    na.t.grad[static_cast<size_t>(i) * n + j] += go.grad[static_cast<size_t>(j) * m + i];
        });
    }

    Ref add(Ref a, Ref b) { return zip(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0); }
    Ref sub(Ref a, Ref b) { return zip(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0); }

    Ref mul(Ref a, Ref b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require_same_shape(ta, tb, "mul");
        Tensor out = ta;
        out.requires_grad = false;
        out.grad.clear();
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= tb.values[i];
        return record(std::move(out), {a, b}, [a, b](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            Node& na = tp.node(a);
            Node& nb = tp.node(b);
            if (na.t.requires_grad)
                for (size_t i = 0; i < g.size(); ++i) na.t.grad[i] += g[i] * nb.t.values[i];
            if (nb.t.requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nb.t.grad[i] += g[i] * na.t.values[i];
        });
    }

    Ref scale(Ref a, double c) {
        return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
    }
    Ref add_scalar(Ref a, double c) {
        return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
    }

    // X[n x d] + b[1 x d], broadcast over rows.
    Ref add_rowvec(Ref x, Ref b) {
        const Tensor& tx = value(x);
        const Tensor& tb = value(b);
        require2d(tx, "add_rowvec lhs");
        if (tb.rows() != 1 || tb.cols() != tx.cols())
            throw std::invalid_argument("add_rowvec: bias shape " + tb.shape_str() + " does not match " +
                                        tx.shape_str());
        const int n = tx.rows(), d = tx.cols();
        Tensor out = tx;
        out.requires_grad = false;
        out.grad.clear();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) out.at(i, j) += tb.values[static_cast<size_t>(j)];
        return record(std::move(out), {x, b}, [x, b, n, d](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            Node& nx = tp.node(x);
            Node& nb = tp.node(b);
            if (nx.t.requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nx.t.grad[i] += g[i];
            if (nb.t.requires_grad)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) nb.t.grad[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * d + j];
        });
    }

    // [1 x d] -> [n x d]
    Ref broadcast_rows(Ref x, int n) {
        const Tensor& tx = value(x);
        if (tx.rows() != 1) throw std::invalid_argument("broadcast_rows: input must be a row vector");
        const int d = tx.cols();
        Tensor out = Tensor::zeros({n, d});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) out.at(i, j) = tx.values[static_cast<size_t>(j)];
        return record(std::move(out), {x}, [x, n, d](Tape& tp, Ref o) {
            Node& nx = tp.node(x);
            if (!nx.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) nx.t.grad[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * d + j];
        });
    }

    Ref slice_cols(Ref x, int c0, int c1) {
        const Tensor& tx = value(x);
        require2d(tx, "slice_cols");
        if (c0 < 0 || c1 > tx.cols() || c0 >= c1)
            throw std::invalid_argument("slice_cols: bad range on " + tx.shape_str());
        const int n = tx.rows(), d = tx.cols(), w = c1 - c0;
        Tensor out = Tensor::zeros({n, w});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w; ++j) out.at(i, j) = tx.at(i, c0 + j);
        return record(std::move(out), {x}, [x, n, d, w, c0](Tape& tp, Ref o) {
            Node& nx = tp.node(x);
            if (!nx.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j)
                    nx.t.grad[static_cast<size_t>(i) * d + c0 + j] += g[static_cast<size_t>(i) * w + j];
        });
    }

    Ref slice_rows(Ref x, int r0, int r1) {
        const Tensor& tx = value(x);
        require2d(tx, "slice_rows");
        if (r0 < 0 || r1 > tx.rows() || r0 >= r1)
            throw std::invalid_argument("slice_rows: bad range on " + tx.shape_str());
        const int d = tx.cols(), h = r1 - r0;
        Tensor out = Tensor::zeros({h, d});
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < d; ++j) out.at(i, j) = tx.at(r0 + i, j);
        return record(std::move(out), {x}, [x, d, h, r0](Tape& tp, Ref o) {
            Node& nx = tp.node(x);
            if (!nx.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < d; ++j)
                    nx.t.grad[static_cast<size_t>(r0 + i) * d + j] += g[static_cast<size_t>(i) * d + j];
        });
    }

    Ref concat_cols(std::span<const Ref> parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
        const int n = value(parts[0]).rows();
        int total = 0;
        for (Ref p : parts) {
            require2d(value(p), "concat_cols");
            if (value(p).rows() != n) throw std::invalid_argument("concat_cols: row counts disagree");
            total += value(p).cols();
        }
        Tensor out = Tensor::zeros({n, total});
        int off = 0;
        for (Ref p : parts) {
            const Tensor& tp_ = value(p);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < tp_.cols(); ++j) out.at(i, off + j) = tp_.at(i, j);
            off += tp_.cols();
        }
        std::vector<Ref> inputs(parts.begin(), parts.end());
        return record(std::move(out), inputs, [inputs, n, total](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            int off = 0;
            for (Ref p : inputs) {
                Node& np = tp.node(p);
                const int w = np.t.cols();
                if (np.t.requires_grad)
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < w; ++j)
                            np.t.grad[static_cast<size_t>(i) * w + j] += g[static_cast<size_t>(i) * total + off + j];
                off += w;
            }
        });
    }
    Ref concat_cols(std::initializer_list<Ref> parts) {
        return concat_cols(std::span<const Ref>(parts.begin(), parts.size()));
    }

    // ---- activations ----

    Ref relu(Ref a) {
        return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    }
    Ref tanh_op(Ref a) {
        return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
    }
    // Overflow-safe log(1+exp(x)); strictly positive output.
    Ref softplus(Ref a) {
        return unary(a, [](double x) { return detail::stable_softplus(x); },
                     [](double x, double) { return detail::sigmoid(x); });
    }

    // ---- structured ops ----

    // Row-wise softmax over the last axis with a shared column mask
    // (mask[j] != 0 means position j participates). Masked positions get
    // exactly zero weight and exactly zero gradient, as if the score had
    // an additive -inf before the softmax.
    Ref masked_softmax(Ref scores, const std::vector<uint8_t>& mask) {
        const Tensor& ts = value(scores);
        require2d(ts, "masked_softmax");
        const int n = ts.rows(), L = ts.cols();
        if (static_cast<int>(mask.size()) != L)
            throw std::invalid_argument("masked_softmax: mask length does not match " + ts.shape_str());
        int alive = 0;
        for (uint8_t m : mask) alive += m ? 1 : 0;
        if (alive == 0) throw std::runtime_error("masked_softmax: fully masked row (no valid history)");
        Tensor out = Tensor::zeros({n, L});
        for (int i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < L; ++j)
                if (mask[j] && ts.at(i, j) > mx) mx = ts.at(i, j);
            double denom = 0.0;
            for (int j = 0; j < L; ++j) {
                if (!mask[j]) continue;
                double e = std::exp(ts.at(i, j) - mx);
                out.at(i, j) = e;
                denom += e;
            }
            for (int j = 0; j < L; ++j)
                if (mask[j]) out.at(i, j) /= denom;
        }
        std::vector<uint8_t> m = mask;
        return record(std::move(out), {scores}, [scores, m, n, L](Tape& tp, Ref o) {
            Node& ns = tp.node(scores);
            if (!ns.t.requires_grad) return;
            const Tensor& to = tp.node(o).t;
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < L; ++j)
                    if (m[j]) dot += to.grad[static_cast<size_t>(i) * L + j] * to.at(i, j);
                for (int j = 0; j < L; ++j) {
                    if (!m[j]) continue;
                    double w = to.at(i, j);
                    ns.t.grad[static_cast<size_t>(i) * L + j] += w * (to.grad[static_cast<size_t>(i) * L + j] - dot);
                }
            }
        });
    }

    // Per-row normalization over the last axis, then affine gain/bias (1 x d).
    Ref layer_norm(Ref x, Ref gain, Ref bias, double eps = 1e-5) {
        const Tensor& tx = value(x);
        const Tensor& tg = value(gain);
        const Tensor& tb = value(bias);
        require2d(tx, "layer_norm");
        const int n = tx.rows(), d = tx.cols();
        if (d < 2) throw std::invalid_argument("layer_norm: needs at least 2 features, got " + tx.shape_str());
        if (tg.rows() != 1 || tg.cols() != d || tb.rows() != 1 || tb.cols() != d)
            throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(d));
        Tensor out = Tensor::zeros({n, d});
        std::vector<double> inv_sd(static_cast<size_t>(n));
        std::vector<double> xhat(static_cast<size_t>(n) * d);
        for (int i = 0; i < n; ++i) {
            double mean = 0.0;
            for (int j = 0; j < d; ++j) mean += tx.at(i, j);
            mean /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) {
                double c = tx.at(i, j) - mean;
                var += c * c;
            }
            var /= d;
            double isd = 1.0 / std::sqrt(var + eps);
            inv_sd[static_cast<size_t>(i)] = isd;
            for (int j = 0; j < d; ++j) {
                double h = (tx.at(i, j) - mean) * isd;
                xhat[static_cast<size_t>(i) * d + j] = h;
                out.at(i, j) = h * tg.values[static_cast<size_t>(j)] + tb.values[static_cast<size_t>(j)];
            }
        }
        return record(std::move(out), {x, gain, bias},
                      [x, gain, bias, n, d, inv_sd, xhat](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            Node& nx = tp.node(x);
            Node& ng = tp.node(gain);
            Node& nb = tp.node(bias);
            for (int i = 0; i < n; ++i) {
                const double isd = inv_sd[static_cast<size_t>(i)];
                double sum_gy = 0.0, sum_gyx = 0.0;
                for (int j = 0; j < d; ++j) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    double gy = g[idx] * ng.t.values[static_cast<size_t>(j)];
                    sum_gy += gy;
                    sum_gyx += gy * xhat[idx];
                }
                for (int j = 0; j < d; ++j) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    if (nx.t.requires_grad) {
                        double gy = g[idx] * ng.t.values[static_cast<size_t>(j)];
                        nx.t.grad[idx] += isd * (gy - sum_gy / d - xhat[idx] * sum_gyx / d);
                    }
                    if (ng.t.requires_grad) ng.t.grad[static_cast<size_t>(j)] += g[idx] * xhat[idx];
                    if (nb.t.requires_grad) nb.t.grad[static_cast<size_t>(j)] += g[idx];
                }
            }
        });
    }

    // Inverted dropout; rate 0 is the identity (no node recorded).
    Ref dropout(Ref x, double rate, Rng& rng) {
        if (rate <= 0.0) return x;
        if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
        const Tensor& tx = value(x);
        const double keep = 1.0 - rate;
        std::vector<double> m(tx.values.size());
        for (double& v : m) v = rng.uniform01() < keep ? 1.0 / keep : 0.0;
        Tensor out = tx;
        out.requires_grad = false;
        out.grad.clear();
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= m[i];
        return record(std::move(out), {x}, [x, m](Tape& tp, Ref o) {
            Node& nx = tp.node(x);
            if (!nx.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (size_t i = 0; i < g.size(); ++i) nx.t.grad[i] += g[i] * m[i];
        });
    }

    // Mean over kept rows -> 1 x d.
    Ref masked_mean_rows(Ref x, const std::vector<uint8_t>& keep) {
        const Tensor& tx = value(x);
        require2d(tx, "masked_mean_rows");
        const int n = tx.rows(), d = tx.cols();
        if (static_cast<int>(keep.size()) != n)
            throw std::invalid_argument("masked_mean_rows: mask length does not match " + tx.shape_str());
        int cnt = 0;
        for (uint8_t k : keep) cnt += k ? 1 : 0;
        if (cnt == 0) throw std::runtime_error("masked_mean_rows: no rows kept");
        Tensor out = Tensor::zeros({1, d});
        for (int i = 0; i < n; ++i) {
            if (!keep[static_cast<size_t>(i)]) continue;
            for (int j = 0; j < d; ++j) out.values[static_cast<size_t>(j)] += tx.at(i, j);
        }
        for (double& v : out.values) v /= cnt;
        std::vector<uint8_t> k = keep;
        return record(std::move(out), {x}, [x, k, n, d, cnt](Tape& tp, Ref o) {
            Node& nx = tp.node(x);
            if (!nx.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (int i = 0; i < n; ++i) {
                if (!k[static_cast<size_t>(i)]) continue;
                for (int j = 0; j < d; ++j)
                    nx.t.grad[static_cast<size_t>(i) * d + j] += g[static_cast<size_t>(j)] / cnt;
            }
        });
    }

    // Single-row lookup from an embedding table; gradient is scattered back
    // to the selected row only.
    Ref embedding_row(Ref table, int index) {
        const Tensor& tt = value(table);
        require2d(tt, "embedding_row");
        if (index < 0 || index >= tt.rows())
            throw std::invalid_argument("embedding_row: index " + std::to_string(index) + " out of range for " +
                                        tt.shape_str());
        const int d = tt.cols();
        Tensor out = Tensor::zeros({1, d});
        for (int j = 0; j < d; ++j) out.values[static_cast<size_t>(j)] = tt.at(index, j);
        return record(std::move(out), {table}, [table, index, d](Tape& tp, Ref o) {
            Node& nt = tp.node(table);
            if (!nt.t.requires_grad) return;
            const std::vector<double>& g = tp.node(o).t.grad;
            for (int j = 0; j < d; ++j) nt.t.grad[static_cast<size_t>(index) * d + j] += g[static_cast<size_t>(j)];
        });
    }

    Ref sum(Ref a) {
        const Tensor& ta = value(a);
        double total = 0.0;
        for (double v : ta.values) total += v;
        Tensor out = Tensor::scalar(total);
        return record(std::move(out), {a}, [a](Tape& tp, Ref o) {
            Node& na = tp.node(a);
            if (!na.t.requires_grad) return;
            const double g = tp.node(o).t.grad[0];
            for (double& gv : na.t.grad) gv += g;
        });
    }

    // ---- reverse pass ----

    void backward(Ref loss) {
        const Tensor& tl = value(loss);
        if (tl.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + tl.shape_str());
        if (!std::isfinite(tl.values[0])) throw std::runtime_error("backward: loss is not finite");
        if (!grad_enabled_) throw std::runtime_error("backward: tape recorded without gradients");
        if (!node(loss).t.requires_grad) return;  // loss independent of any parameter
        node(loss).t.grad.assign(1, 1.0);
        for (int32_t i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.t.requires_grad) n.back(*this, Ref{i});
        }
    }

private:
    struct Node {
        Tensor t;
        std::function<void(Tape&, Ref)> back;
    };

    Node& node(Ref r) {
        if (!r.valid() || r.id >= static_cast<int32_t>(nodes_.size()))
            throw std::logic_error("Tape: invalid tensor reference");
        return nodes_[static_cast<size_t>(r.id)];
    }
    const Node& node(Ref r) const { return const_cast<Tape*>(this)->node(r); }

    static void require2d(const Tensor& t, const char* what) {
        if (t.shape.size() != 2)
            throw std::invalid_argument(std::string(what) + ": expected a 2-D tensor, got " + t.shape_str());
    }
    static void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
        if (a.shape != b.shape)
            throw std::invalid_argument(std::string(what) + ": shapes disagree: " + a.shape_str() + " vs " +
                                        b.shape_str());
    }

    template <class Back>
    Ref record(Tensor out, const std::vector<Ref>& inputs, Back back) {
        bool req = false;
        if (grad_enabled_)
            for (Ref r : inputs) req = req || node(r).t.requires_grad;
        out.requires_grad = req;
        if (req) out.grad.assign(out.values.size(), 0.0);
        nodes_.push_back(Node{std::move(out), nullptr});
        Ref ref{static_cast<int32_t>(nodes_.size() - 1)};
        if (req) nodes_.back().back = std::move(back);
        return ref;
    }

    template <class F, class DF>
    Ref unary(Ref a, F f, DF df) {
        const Tensor& ta = value(a);
        Tensor out = ta;
        out.requires_grad = false;
        out.grad.clear();
        for (double& v : out.values) v = f(v);
        return record(std::move(out), {a}, [a, df](Tape& tp, Ref o) {
            Node& na = tp.node(a);
            if (!na.t.requires_grad) return;
            const Tensor& to = tp.node(o).t;
            for (size_t i = 0; i < to.values.size(); ++i)
                na.t.grad[i] += to.grad[i] * df(na.t.values[i], to.values[i]);
        });
    }

    template <class F>
    Ref zip(Ref a, Ref b, const char* what, F f, double da, double db) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require_same_shape(ta, tb, what);
        Tensor out = ta;
        out.requires_grad = false;
        out.grad.clear();
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(ta.values[i], tb.values[i]);
        return record(std::move(out), {a, b}, [a, b, da, db](Tape& tp, Ref o) {
            const std::vector<double>& g = tp.node(o).t.grad;
            Node& na = tp.node(a);
            Node& nb = tp.node(b);
            if (na.t.requires_grad)
                for (size_t i = 0; i < g.size(); ++i) na.t.grad[i] += da * g[i];
            if (nb.t.requires_grad)
                for (size_t i = 0; i < g.size(); ++i) nb.t.grad[i] += db * g[i];
        });
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Named parameters + Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    int64_t step = 0;
};

struct Param {
    std::string name;
    Tensor value;  // requires_grad; value.grad is the gradient accumulator
    AdamState adam;
    bool frozen = false;
};

class ParamStore {
public:
    int add(std::string name, Tensor init) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        init.requires_grad = true;
        init.grad.assign(init.values.size(), 0.0);
        Param p;
        p.name = std::move(name);
        p.adam.m.assign(init.values.size(), 0.0);
        p.adam.v.assign(init.values.size(), 0.0);
        p.value = std::move(init);
        params_.push_back(std::move(p));
        index_[params_.back().name] = static_cast<int>(params_.size() - 1);
        return static_cast<int>(params_.size() - 1);
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Param& at(int id) { return params_.at(static_cast<size_t>(id)); }
    const Param& at(int id) const { return params_.at(static_cast<size_t>(id)); }
    Param& at(const std::string& name) { return params_.at(static_cast<size_t>(index_.at(name))); }
    const Param& at(const std::string& name) const { return params_.at(static_cast<size_t>(index_.at(name))); }
    int id_of(const std::string& name) const { return index_.at(name); }
    size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad() {
        for (Param& p : params_) std::fill(p.value.grad.begin(), p.value.grad.end(), 0.0);
    }

    void scale_grad(double c) {
        for (Param& p : params_)
            for (double& g : p.value.grad) g *= c;
    }

    double grad_norm() const {
        double s = 0.0;
        for (const Param& p : params_)
            for (double g : p.value.grad) s += g * g;
        return std::sqrt(s);
    }

    void clip_grad_norm(double max_norm) {
        if (max_norm <= 0.0) return;
        double n = grad_norm();
        if (n > max_norm) scale_grad(max_norm / n);
    }

    void set_frozen_by_prefix(const std::vector<std::string>& prefixes) {
        for (Param& p : params_) {
            p.frozen = false;
            for (const std::string& pre : prefixes)
                if (p.name.rfind(pre, 0) == 0) p.frozen = true;
        }
    }

    // One Adam update from the accumulated gradients. Frozen parameters are
    // untouched (values, moments and step count all left as-is).
    void adam_step(double lr, const AdamConfig& cfg = {}) {
        for (Param& p : params_) {
            if (p.frozen) continue;
            for (double g : p.value.grad)
                if (std::isnan(g)) throw std::runtime_error("adam_step: NaN gradient in parameter " + p.name);
            AdamState& st = p.adam;
            ++st.step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
            for (size_t i = 0; i < p.value.values.size(); ++i) {
                const double g = p.value.grad[i];
                st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
                st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
                const double mhat = st.m[i] / bc1;
                const double vhat = st.v[i] / bc2;
                p.value.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, int> index_;
};

// Binds parameters to tape leaves for one forward/backward pass and collects
// the resulting gradients back into the store's accumulators.
class BoundParams {
public:
    BoundParams(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

    Tape::Ref operator()(const std::string& name) {
        int id = store_.id_of(name);
        auto it = refs_.find(id);
        if (it != refs_.end()) return it->second;
        Tape::Ref r = tape_.leaf(store_.at(id).value);
        refs_.emplace(id, r);
        return r;
    }

    void collect() {
        if (!tape_.grad_enabled()) return;
        for (auto& [id, ref] : refs_) {
            const std::vector<double>& g = tape_.grad(ref);
            if (g.empty()) continue;
            std::vector<double>& acc = store_.at(id).value.grad;
            for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
    }

private:
    Tape& tape_;
    ParamStore& store_;
    std::unordered_map<int, Tape::Ref> refs_;
};

}  // namespace demandcast
