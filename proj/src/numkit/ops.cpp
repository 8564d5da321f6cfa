// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "geovid/errors.hpp"

namespace geovid::nk {

namespace {

struct View2 {
    std::size_t rows;
    std::size_t cols;
};

View2 view2(const Tensor& t) { return {t.rows(), t.cols()}; }

Shape broadcast_shape(const Tensor& a, const Tensor& b, View2& out) {
    View2 va = view2(a), vb = view2(b);
    if (a.shape() == b.shape()) {
        out = va;
        return a.shape();
    }
    if (a.ndim() > 2 || b.ndim() > 2) {
        throw ShapeError("cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
    }
    auto merge = [&](std::size_t x, std::size_t y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw ShapeError("cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
    };
    out = {merge(va.rows, vb.rows), merge(va.cols, vb.cols)};
    if (a.ndim() == 2 || b.ndim() == 2) return {out.rows, out.cols};
    return {out.cols};
}

template <class F, class GA, class GB>
Tensor binary(const Tensor& a, const Tensor& b, F f, GA ga, GB gb) {
    View2 o{};
    Shape shape = broadcast_shape(a, b, o);
    const View2 va = view2(a), vb = view2(b);
    const auto ad = a.data();
    const auto bd = b.data();
    auto idx = [](const View2& v, std::size_t i, std::size_t j) {
        return (v.rows == 1 ? 0 : i) * v.cols + (v.cols == 1 ? 0 : j);
    };
    std::vector<double> out(o.rows * o.cols);
    for (std::size_t i = 0; i < o.rows; ++i) {
        for (std::size_t j = 0; j < o.cols; ++j) out[i * o.cols + j] = f(ad[idx(va, i, j)], bd[idx(vb, i, j)]);
    }
    return Tensor::from_op(std::move(shape), std::move(out), {a, b},
                           [va, vb, o, idx, ga, gb](const Node& self, std::span<const double> g,
                                                    std::span<std::vector<double>*> pg) {
                               const auto& ad = self.parents[0]->data;
                               const auto& bd = self.parents[1]->data;
                               for (std::size_t i = 0; i < o.rows; ++i) {
                                   for (std::size_t j = 0; j < o.cols; ++j) {
                                       const std::size_t ia = idx(va, i, j), ib = idx(vb, i, j);
                                       const double go = g[i * o.cols + j];
                                       if (pg[0]) (*pg[0])[ia] += go * ga(ad[ia], bd[ib]);
                                       if (pg[1]) (*pg[1])[ib] += go * gb(ad[ia], bd[ib]);
                                   }
                               }
                           });
}

// df receives (input, output).
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    return Tensor::from_op(x.shape(), std::move(out), {x},
                           [df](const Node& self, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               const auto& xd = self.parents[0]->data;
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += g[i] * df(xd[i], self.data[i]);
                           });
}

void require_2d(const Tensor& x, const char* op) {
    if (x.ndim() > 2) throw ShapeError(std::string(op) + " needs a 2-D tensor, got " + shape_str(x.shape()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
    return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw DomainError("log of non-positive value");
    }
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](double v, double) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Tensor sqrt(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw DomainError("sqrt needs strictly positive input for a finite gradient");
    }
    return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, [](double v) { return std::abs(v); }, [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Constant interpolation matrices have a handful of non-zeros per row; a
// zero-skipping loop beats dense GEMM for them.
bool mostly_zero(std::span<const double> v) {
    std::size_t nz = 0;
    for (double x : v) nz += x != 0.0 ? 1 : 0;
    return nz * 4 < v.size();
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const auto ad = a.data();
    const auto bd = b.data();
    const bool sparse_a = mostly_zero(ad);
    std::vector<double> out(n * m, 0.0);
    if (sparse_a) {
        for (std::size_t i = 0; i < n; ++i) {
            double* orow = out.data() + i * m;
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = ad[i * k + p];
                if (aip == 0.0) continue;
                const double* brow = bd.data() + p * m;
                for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
            }
        }
    } else {
        MutMap(out.data(), n, m).noalias() = ConstMap(ad.data(), n, k) * ConstMap(bd.data(), k, m);
    }
    return Tensor::from_op(
        {n, m}, std::move(out), {a, b},
        [n, k, m, sparse_a](const Node& self, std::span<const double> g, std::span<std::vector<double>*> pg) {
            const auto& ad = self.parents[0]->data;
            const auto& bd = self.parents[1]->data;
            const ConstMap gm(g.data(), n, m);
            if (pg[0]) MutMap(pg[0]->data(), n, k).noalias() += gm * ConstMap(bd.data(), k, m).transpose();
            if (!pg[1]) return;
            if (sparse_a) {
                auto& gb = *pg[1];
                for (std::size_t i = 0; i < n; ++i) {
                    const double* grow = g.data() + i * m;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = ad[i * k + p];
                        if (aip == 0.0) continue;
                        double* gbrow = gb.data() + p * m;
                        for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                    }
                }
            } else {
                MutMap(pg[1]->data(), k, m).noalias() += ConstMap(ad.data(), n, k).transpose() * gm;
            }
        });
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = xd[i * m + j];
    return Tensor::from_op({m, n}, std::move(out), {x},
                           [n, m](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[j * n + i];
                           });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape) + " changes element count");
    }
    const auto xd = x.data();
    return Tensor::from_op(std::move(shape), std::vector<double>(xd.begin(), xd.end()), {x},
                           [](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_2d(x, "slice_cols");
    const std::size_t n = x.rows(), m = x.cols();
    if (count == 0 || begin + count > m) throw ShapeError("column slice out of range");
    const auto xd = x.data();
    std::vector<double> out(n * count);
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(xd.data() + i * m + begin, count, out.data() + i * count);
    Shape shape = x.ndim() == 2 ? Shape{n, count} : Shape{count};
    return Tensor::from_op(std::move(shape), std::move(out), {x},
                           [n, m, begin, count](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < count; ++j) gx[i * m + begin + j] += g[i * count + j];
                           });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    require_2d(x, "slice_rows");
    const std::size_t n = x.rows(), m = x.cols();
    if (count == 0 || begin + count > n) throw ShapeError("row slice out of range");
    const auto xd = x.data();
    std::vector<double> out(xd.begin() + begin * m, xd.begin() + (begin + count) * m);
    return Tensor::from_op({count, m}, std::move(out), {x},
                           [m, begin](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < g.size(); ++i) gx[begin * m + i] += g[i];
                           });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const std::size_t n = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p.rows() != n) throw ShapeError("concat_cols row counts differ");
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<double> out(n * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto d = parts[k].data();
        for (std::size_t i = 0; i < n; ++i) std::copy_n(d.data() + i * widths[k], widths[k], out.data() + i * total + off);
        off += widths[k];
    }
    return Tensor::from_op({n, total}, std::move(out), parts,
                           [n, total, widths](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                   if (pg[k]) {
                                       auto& gk = *pg[k];
                                       for (std::size_t i = 0; i < n; ++i)
                                           for (std::size_t j = 0; j < widths[k]; ++j)
                                               gk[i * widths[k] + j] += g[i * total + off + j];
                                   }
                                   off += widths[k];
                               }
                           });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    const std::size_t m = parts[0].cols();
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p.cols() != m) throw ShapeError("concat_rows column counts differ");
        sizes.push_back(p.numel());
        rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(rows * m);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Tensor::from_op({rows, m}, std::move(out), parts,
                           [sizes](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < sizes.size(); ++k) {
                                   if (pg[k]) {
                                       auto& gk = *pg[k];
                                       for (std::size_t i = 0; i < sizes[k]; ++i) gk[i] += g[off + i];
                                   }
                                   off += sizes[k];
                               }
                           });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
    require_2d(x, "gather_rows");
    const std::size_t n = x.rows(), m = x.cols();
    if (index.empty()) throw ShapeError("gather_rows with empty index");
    const auto xd = x.data();
    std::vector<double> out(index.size() * m);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= n) throw ShapeError("gather_rows index out of range");
        std::copy_n(xd.data() + index[r] * m, m, out.data() + r * m);
    }
    return Tensor::from_op({index.size(), m}, std::move(out), {x},
                           [index, m](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t r = 0; r < index.size(); ++r)
                                   for (std::size_t j = 0; j < m; ++j) gx[index[r] * m + j] += g[r * m + j];
                           });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return Tensor::from_op({1}, {s}, {x}, [](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
        for (auto& v : *pg[0]) v += g[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_rows(const Tensor& x) {
    require_2d(x, "sum_rows");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += xd[i * m + j];
    return Tensor::from_op({n, 1}, std::move(out), {x},
                           [n, m](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[i];
                           });
}

Tensor sum_cols(const Tensor& x) {
    require_2d(x, "sum_cols");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j] += xd[i * m + j];
    return Tensor::from_op({1, m}, std::move(out), {x},
                           [n, m](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[j];
                           });
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = xd.data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] = std::exp(row[j] - mx);
            z += out[i * m + j];
        }
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
    }
    return Tensor::from_op(x.shape(), std::move(out), {x},
                           [n, m](const Node& self, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               const auto& y = self.data;
                               for (std::size_t i = 0; i < n; ++i) {
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * y[i * m + j];
                                   for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[i * m + j] * (g[i * m + j] - dot);
                               }
                           });
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
    require_2d(x, "layer_norm_rows");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> out(n * m);
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = xd.data() + i * m;
        double mu = 0.0;
        for (std::size_t j = 0; j < m; ++j) mu += row[j];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t j = 0; j < m; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(m);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = (row[j] - mu) * inv_std[i];
    }
    return Tensor::from_op(x.shape(), std::move(out), {x},
                           [n, m, inv_std](const Node& self, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               const auto& y = self.data;
                               const double inv_m = 1.0 / static_cast<double>(m);
                               for (std::size_t i = 0; i < n; ++i) {
                                   double gm = 0.0, gy = 0.0;
                                   for (std::size_t j = 0; j < m; ++j) {
                                       gm += g[i * m + j];
                                       gy += g[i * m + j] * y[i * m + j];
                                   }
                                   gm *= inv_m;
                                   gy *= inv_m;
                                   for (std::size_t j = 0; j < m; ++j)
                                       gx[i * m + j] += inv_std[i] * (g[i * m + j] - gm - y[i * m + j] * gy);
                               }
                           });
}

Tensor normalize_rows(const Tensor& x, double target_norm, double min_norm) {
    require_2d(x, "normalize_rows");
    const std::size_t n = x.rows(), m = x.cols();
    const auto xd = x.data();
    std::vector<double> norms(n);
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += xd[i * m + j] * xd[i * m + j];
        norms[i] = std::sqrt(s);
        if (!(norms[i] >= min_norm)) throw DegenerateInputError("cannot normalize a zero-norm row");
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = target_norm * xd[i * m + j] / norms[i];
    }
    return Tensor::from_op(x.shape(), std::move(out), {x},
                           [n, m, norms, target_norm](const Node& self, std::span<const double> g,
                                                      std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               const auto& xd = self.parents[0]->data;
                               for (std::size_t i = 0; i < n; ++i) {
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * xd[i * m + j];
                                   const double r = norms[i];
                                   for (std::size_t j = 0; j < m; ++j)
                                       gx[i * m + j] += target_norm / r * (g[i * m + j] - xd[i * m + j] * dot / (r * r));
                               }
                           });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& labels) {
    require_2d(logits, "cross_entropy_rows");
    const std::size_t n = logits.rows(), m = logits.cols();
    if (labels.size() != n) throw ShapeError("one label per row required");
    const auto ld = logits.data();
    std::vector<double> probs(n * m);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= m) throw DomainError("label out of range");
        const double* row = ld.data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < m; ++j) probs[i * m + j] = std::exp(row[j] - lse);
        loss += lse - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    return Tensor::from_op({1}, {loss}, {logits},
                           [n, m, probs, labels](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gx = *pg[0];
                               const double s = g[0] / static_cast<double>(n);
                               for (std::size_t i = 0; i < n; ++i) {
                                   for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += s * probs[i * m + j];
                                   gx[i * m + labels[i]] -= s;
                               }
                           });
}

Tensor quat_to_rotmat(const Tensor& q) {
    if (q.numel() != 4) throw ShapeError("quaternion needs 4 elements, got " + shape_str(q.shape()));
    const auto d = q.data();
    const double w = d[0], x = d[1], y = d[2], z = d[3];
    std::vector<double> r = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
                             2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                             2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return Tensor::from_op({3, 3}, std::move(r), {q},
                           [](const Node& self, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               const auto& d = self.parents[0]->data;
                               const double w = d[0], x = d[1], y = d[2], z = d[3];
                               // Rows: d/dw, d/dx, d/dy, d/dz of the nine entries.
                               const double jac[4][9] = {
                                   {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0},
                                   {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x},
                                   {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y},
                                   {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0},
                               };
                               auto& gq = *pg[0];
                               for (int a = 0; a < 4; ++a) {
                                   double acc = 0.0;
                                   for (int e = 0; e < 9; ++e) acc += jac[a][e] * g[e];
                                   gq[a] += acc;
                               }
                           });
}

Tensor rotation_angle_sq(const Tensor& m) {
    if (m.numel() != 9) throw ShapeError("rotation_angle_sq needs a 3x3 matrix");
    const auto d = m.data();
    const double u0 = d[7] - d[5], u1 = d[2] - d[6], u2 = d[3] - d[1];
    const double s = 0.5 * std::sqrt(u0 * u0 + u1 * u1 + u2 * u2);
    const double c = 0.5 * (d[0] + d[4] + d[8] - 1.0);
    const double theta = std::atan2(s, c);
    return Tensor::from_op({1}, {theta * theta}, {m},
                           [u0, u1, u2, s, c, theta](const Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
                               auto& gm = *pg[0];
                               const double r2 = s * s + c * c;
                               if (r2 == 0.0) return;
                               // theta/s stays finite as s -> 0 when c > 0.
                               double ratio = 0.0;
                               if (s > 1e-150) {
                                   ratio = theta / s;
                               } else if (c > 0) {
                                   ratio = 1.0 / c;
                               }
                               const double ku = g[0] * ratio * (c / r2) * 0.5;
                               gm[7] += ku * u0;
                               gm[5] -= ku * u0;
                               gm[2] += ku * u1;
                               gm[6] -= ku * u1;
                               gm[3] += ku * u2;
                               gm[1] -= ku * u2;
                               const double kd = -g[0] * theta * s / r2;
                               gm[0] += kd;
                               gm[4] += kd;
                               gm[8] += kd;
                           });
}

} // namespace geovid::nk
