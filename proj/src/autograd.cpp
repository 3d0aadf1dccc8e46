#include "exstyle/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <sstream>

namespace exstyle {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;
using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void Tape::backward(Tensor& loss) {
    if (!loss.is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss.shape_str());
    loss.ensure_grad();
    loss.gradvec()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
    throw std::invalid_argument(op + ": " + msg);
}

void require_rank(const std::string& op, const Tensor& t, int rank, const char* role) {
    if (t.rank() != rank)
        fail(op, std::string(role) + " must have rank " + std::to_string(rank) + ", got shape " +
                     t.shape_str());
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad) return true;
    return false;
}

// Adds g into t.grad when t participates in differentiation.
void accum(Tensor& t, const Eigen::Ref<const ArrayXd>& g) {
    if (!t.requires_grad) return;
    t.ensure_grad();
    Eigen::Map<ArrayXd>(t.grad_data(), static_cast<Eigen::Index>(t.gradvec().size())) += g;
}

Eigen::Map<const ArrayXd> out_grad(const Tensor& out) {
    return {out.grad_data(), static_cast<Eigen::Index>(out.gradvec().size())};
}

// Fixed-order reductions. Eigen's vectorized redux splits the sum at an
// alignment-dependent boundary, so its rounding varies with the buffer
// address; these accumulate in a fixed grouping and are bit-reproducible.
double det_sum(const double* p, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += p[i];
        s1 += p[i + 1];
        s2 += p[i + 2];
        s3 += p[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += p[i];
    return s;
}

double det_dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

namespace ops {

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
    require_rank("conv2d", x, 3, "input");
    require_rank("conv2d", w, 4, "kernel");
    require_rank("conv2d", b, 1, "bias");
    const int cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const int cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != cin)
        fail("conv2d", "kernel expects " + std::to_string(w.shape[1]) + " input channels, input " +
                           x.shape_str());
    if (b.shape[0] != cout) fail("conv2d", "bias shape " + b.shape_str() + " vs Cout " +
                                               std::to_string(cout));
    if (stride != 1 && stride != 2) fail("conv2d", "stride must be 1 or 2");
    if (pad < 0) fail("conv2d", "negative padding");
    const int hout = (h + 2 * pad - kh) / stride + 1;
    const int wout = (wd + 2 * pad - kw) / stride + 1;
    if (hout <= 0 || wout <= 0)
        fail("conv2d", "kernel " + w.shape_str() + " does not fit input " + x.shape_str());

    const int k = cin * kh * kw;
    const int m = hout * wout;
    // stored transposed (m x k, column-major) so the patch writes below and the
    // col2im reads in the backward pass are contiguous
    auto col = std::make_shared<MatrixXd>(m, k);
    col->setZero();
    const double* xd = x.data->data();
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const int row = (ci * kh + ky) * kw + kx;
                double* dst = col->data() + static_cast<std::ptrdiff_t>(row) * m;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = xd + (ci * h + iy) * wd;
                    if (stride == 1) {
                        // contiguous span: ix = ox - pad + kx stays in [0, wd)
                        const int ox0 = std::max(0, pad - kx);
                        const int ox1 = std::min(wout, wd + pad - kx);
                        if (ox1 > ox0)
                            std::memcpy(dst + oy * wout + ox0, src + ox0 - pad + kx,
                                        static_cast<std::size_t>(ox1 - ox0) * sizeof(double));
                    } else {
                        for (int ox = 0; ox < wout; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < wd) dst[oy * wout + ox] = src[ix];
                        }
                    }
                }
            }
        }
    }

    Tensor out = Tensor::zeros({cout, hout, wout});
    MapRowC wm(w.data->data(), cout, k);
    MapRow om(out.data->data(), cout, m);
    om.noalias() = wm * col->transpose();
    for (int c = 0; c < cout; ++c) om.row(c).array() += (*b.data)[static_cast<std::size_t>(c)];

    if (tape && any_grad({&x, &w, &b})) {
        out.requires_grad = true;
        Tensor xc = x, wc = w, bc = b;
        tape->record([xc, wc, bc, out, col, stride, pad, cin, h, wd, cout, kh, kw, hout, wout,
                      k, m]() mutable {
            if (!out.has_grad()) return;
            MapRowC go(out.grad_data(), cout, m);
            if (bc.requires_grad) {
                bc.ensure_grad();
                for (int c = 0; c < cout; ++c)
                    bc.gradvec()[static_cast<std::size_t>(c)] +=
                        det_sum(out.grad_data() + static_cast<std::ptrdiff_t>(c) * m,
                                static_cast<std::size_t>(m));
            }
            if (wc.requires_grad) {
                wc.ensure_grad();
                MapRow gw(wc.grad_data(), cout, k);
                gw.noalias() += go * (*col);
            }
            if (xc.requires_grad) {
                xc.ensure_grad();
                MapRowC wm2(wc.data->data(), cout, k);
                MatrixXd gcol = go.matrix().transpose() * wm2;  // m x k, matches col layout
                double* gx = xc.grad_data();
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const int row = (ci * kh + ky) * kw + kx;
                            const double* src = gcol.data() + static_cast<std::ptrdiff_t>(row) * m;
                            for (int oy = 0; oy < hout; ++oy) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                double* dst = gx + (ci * h + iy) * wd;
                                for (int ox = 0; ox < wout; ++ox) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix >= 0 && ix < wd) dst[ix] += src[oy * wout + ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor upsample_nearest2x(Tape* tape, const Tensor& x) {
    require_rank("upsample_nearest2x", x, 3, "input");
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                (*out.data)[(ci * 2 * h + y) * 2 * w + xx] =
                    (*x.data)[(ci * h + y / 2) * w + xx / 2];
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, c, h, w]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            double* gx = xc.grad_data();
            const double* go = out.grad_data();
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        gx[(ci * h + y / 2) * w + xx / 2] +=
                            go[(ci * 2 * h + y) * 2 * w + xx];
        });
    }
    return out;
}

Tensor instance_norm(Tape* tape, const Tensor& x, double eps) {
    require_rank("instance_norm", x, 3, "input");
    const int c = x.shape[0];
    const int m = x.shape[1] * x.shape[2];
    Tensor out = Tensor::zeros(x.shape);
    auto inv_std = std::make_shared<VectorXd>(c);
    for (int ci = 0; ci < c; ++ci) {
        Eigen::Map<const ArrayXd> xi(x.data->data() + ci * m, m);
        const double mu = det_sum(xi.data(), static_cast<std::size_t>(m)) / m;
        const ArrayXd centered = xi - mu;
        const double var =
            det_dot(centered.data(), centered.data(), static_cast<std::size_t>(m)) / m;
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[ci] = istd;
        Eigen::Map<ArrayXd>(out.data->data() + ci * m, m) = (xi - mu) * istd;
    }
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, inv_std, c, m]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                Eigen::Map<const ArrayXd> g(out.grad_data() + ci * m, m);
                Eigen::Map<const ArrayXd> z(out.data->data() + ci * m, m);
                const double gm = det_sum(g.data(), static_cast<std::size_t>(m)) / m;
                const double gzm = det_dot(g.data(), z.data(), static_cast<std::size_t>(m)) / m;
                Eigen::Map<ArrayXd>(xc.grad_data() + ci * m, m) +=
                    (*inv_std)[ci] * (g - gm - z * gzm);
            }
        });
    }
    return out;
}

Tensor scale_shift(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    require_rank("scale_shift", x, 3, "input");
    require_rank("scale_shift", gamma, 1, "gamma");
    require_rank("scale_shift", beta, 1, "beta");
    const int c = x.shape[0];
    if (gamma.shape[0] != c || beta.shape[0] != c)
        fail("scale_shift", "channel mismatch: x " + x.shape_str() + ", gamma " +
                                gamma.shape_str() + ", beta " + beta.shape_str());
    const int m = x.shape[1] * x.shape[2];
    Tensor out = Tensor::zeros(x.shape);
    for (int ci = 0; ci < c; ++ci)
        Eigen::Map<ArrayXd>(out.data->data() + ci * m, m) =
            Eigen::Map<const ArrayXd>(x.data->data() + ci * m, m) * (*gamma.data)[ci] +
            (*beta.data)[ci];
    if (tape && any_grad({&x, &gamma, &beta})) {
        out.requires_grad = true;
        Tensor xc = x, gc = gamma, bc = beta;
        tape->record([xc, gc, bc, out, c, m]() mutable {
            if (!out.has_grad()) return;
            for (int ci = 0; ci < c; ++ci) {
                Eigen::Map<const ArrayXd> g(out.grad_data() + ci * m, m);
                Eigen::Map<const ArrayXd> xi(xc.data->data() + ci * m, m);
                if (gc.requires_grad) {
                    gc.ensure_grad();
                    gc.gradvec()[ci] += det_dot(g.data(), xi.data(), static_cast<std::size_t>(m));
                }
                if (bc.requires_grad) {
                    bc.ensure_grad();
                    bc.gradvec()[ci] += det_sum(g.data(), static_cast<std::size_t>(m));
                }
                if (xc.requires_grad) {
                    xc.ensure_grad();
                    Eigen::Map<ArrayXd>(xc.grad_data() + ci * m, m) += g * (*gc.data)[ci];
                }
            }
        });
    }
    return out;
}

namespace {

// Templated on the functor types so the per-element calls inline.
template <class F, class DF>
Tensor elementwise(Tape* tape, const Tensor& x, const char* name, F f, DF df_xy) {
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.data->size(); ++i) (*out.data)[i] = f((*x.data)[i]);
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, df_xy]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            double* gx = xc.grad_data();
            const double* go = out.grad_data();
            const double* xd = xc.data->data();
            const double* od = out.data->data();
            const std::size_t n = xc.data->size();
            for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * df_xy(xd[i], od[i]);
        });
    }
    (void)name;
    return out;
}

}  // namespace

Tensor leaky_relu(Tape* tape, const Tensor& x, double alpha) {
    return elementwise(
        tape, x, "leaky_relu", [alpha](double v) { return v > 0 ? v : alpha * v; },
        [alpha](double v, double) { return v > 0 ? 1.0 : alpha; });
}

Tensor relu(Tape* tape, const Tensor& x) {
    return elementwise(
        tape, x, "relu", [](double v) { return v > 0 ? v : 0.0; },
        [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape* tape, const Tensor& x) {
    return elementwise(
        tape, x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(Tape* tape, const Tensor& x) {
    return elementwise(
        tape, x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor log(Tape* tape, const Tensor& x) {
    // clamped at 1e-300 so finite inputs stay finite
    return elementwise(
        tape, x, "log", [](double v) { return std::log(std::max(v, 1e-300)); },
        [](double v, double) { return 1.0 / std::max(v, 1e-300); });
}

Tensor linear(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b) {
    require_rank("linear", w, 2, "weight");
    require_rank("linear", x, 1, "input");
    require_rank("linear", b, 1, "bias");
    const int no = w.shape[0], ni = w.shape[1];
    if (x.shape[0] != ni || b.shape[0] != no)
        fail("linear", "shape mismatch: w " + w.shape_str() + ", x " + x.shape_str() + ", b " +
                           b.shape_str());
    Tensor out = Tensor::zeros({no});
    MapRowC wm(w.data->data(), no, ni);
    Eigen::Map<const VectorXd> xv(x.data->data(), ni);
    Eigen::Map<VectorXd> ov(out.data->data(), no);
    ov.noalias() = wm * xv;
    ov += Eigen::Map<const VectorXd>(b.data->data(), no);
    if (tape && any_grad({&w, &x, &b})) {
        out.requires_grad = true;
        Tensor wc = w, xc = x, bc = b;
        tape->record([wc, xc, bc, out, no, ni]() mutable {
            if (!out.has_grad()) return;
            Eigen::Map<const VectorXd> g(out.grad_data(), no);
            if (bc.requires_grad) {
                bc.ensure_grad();
                Eigen::Map<VectorXd>(bc.grad_data(), no) += g;
            }
            if (wc.requires_grad) {
                wc.ensure_grad();
                MapRow gw(wc.grad_data(), no, ni);
                gw.noalias() += g * Eigen::Map<const VectorXd>(xc.data->data(), ni).transpose();
            }
            if (xc.requires_grad) {
                xc.ensure_grad();
                MapRowC wm2(wc.data->data(), no, ni);
                Eigen::Map<VectorXd>(xc.grad_data(), ni).noalias() += wm2.transpose() * g;
            }
        });
    }
    return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
    require_rank("global_avg_pool", x, 3, "input");
    const int c = x.shape[0];
    const int m = x.shape[1] * x.shape[2];
    Tensor out = Tensor::zeros({c});
    for (int ci = 0; ci < c; ++ci)
        (*out.data)[ci] =
            det_sum(x.data->data() + static_cast<std::ptrdiff_t>(ci) * m,
                    static_cast<std::size_t>(m)) /
            m;
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, c, m]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            for (int ci = 0; ci < c; ++ci)
                Eigen::Map<ArrayXd>(xc.grad_data() + ci * m, m) += out.gradvec()[ci] / m;
        });
    }
    return out;
}

namespace {

// Shared row/vector normalization kernel; eps2 keeps zero vectors finite
// without disturbing norms above 1e-6.
constexpr double kNormEps2 = 1e-24;

void l2n_forward(const double* x, double* y, int n) {
    Eigen::Map<const ArrayXd> xv(x, n);
    const double norm = std::sqrt(det_dot(x, x, static_cast<std::size_t>(n)) + kNormEps2);
    Eigen::Map<ArrayXd>(y, n) = xv / norm;
}

void l2n_backward(const double* x, const double* y, const double* g, double* gx, int n) {
    Eigen::Map<const ArrayXd> yv(y, n), gv(g, n);
    const double norm = std::sqrt(det_dot(x, x, static_cast<std::size_t>(n)) + kNormEps2);
    const double proj = det_dot(y, g, static_cast<std::size_t>(n));
    Eigen::Map<ArrayXd>(gx, n) += (gv - yv * proj) / norm;
}

}  // namespace

Tensor l2_normalize(Tape* tape, const Tensor& x) {
    if (x.rank() != 1 && x.rank() != 2)
        fail("l2_normalize", "expects rank 1 or 2, got " + x.shape_str());
    const int rows = x.rank() == 2 ? x.shape[0] : 1;
    const int n = x.shape[x.rank() - 1];
    Tensor out = Tensor::zeros(x.shape);
    for (int r = 0; r < rows; ++r)
        l2n_forward(x.data->data() + r * n, out.data->data() + r * n, n);
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, rows, n]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            for (int r = 0; r < rows; ++r)
                l2n_backward(xc.data->data() + r * n, out.data->data() + r * n,
                             out.grad_data() + r * n, xc.grad_data() + r * n, n);
        });
    }
    return out;
}

namespace {

Tensor binary(Tape* tape, const Tensor& a, const Tensor& b, const char* name, int mode) {
    if (a.shape != b.shape)
        fail(name, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    auto av = a.array(), bv = b.array();
    auto ov = out.array();
    if (mode == 0)
        ov = av + bv;
    else if (mode == 1)
        ov = av - bv;
    else
        ov = av * bv;
    if (tape && any_grad({&a, &b})) {
        out.requires_grad = true;
        Tensor ac = a, bc = b;
        tape->record([ac, bc, out, mode]() mutable {
            if (!out.has_grad()) return;
            auto g = out_grad(out);
            if (mode == 0) {
                accum(ac, g);
                accum(bc, g);
            } else if (mode == 1) {
                accum(ac, g);
                accum(bc, (-g).eval());
            } else {
                accum(ac, (g * bc.array()).eval());
                accum(bc, (g * ac.array()).eval());
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, "add", 0); }
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, "sub", 1); }
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, "mul", 2); }

Tensor dot(Tape* tape, const Tensor& a, const Tensor& b) {
    require_rank("dot", a, 1, "lhs");
    require_rank("dot", b, 1, "rhs");
    if (a.shape != b.shape)
        fail("dot", "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::scalar(
        det_dot(a.data->data(), b.data->data(), static_cast<std::size_t>(a.size())));
    if (tape && any_grad({&a, &b})) {
        out.requires_grad = true;
        Tensor ac = a, bc = b;
        tape->record([ac, bc, out]() mutable {
            if (!out.has_grad()) return;
            const double g = out.gradvec()[0];
            accum(ac, (g * bc.array()).eval());
            accum(bc, (g * ac.array()).eval());
        });
    }
    return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
    Tensor out =
        Tensor::scalar(det_sum(x.data->data(), static_cast<std::size_t>(x.size())));
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out]() mutable {
            if (!out.has_grad()) return;
            accum(xc, ArrayXd::Constant(xc.size(), out.gradvec()[0]));
        });
    }
    return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
    const double n = static_cast<double>(x.size());
    Tensor out =
        Tensor::scalar(det_sum(x.data->data(), static_cast<std::size_t>(x.size())) / n);
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, n]() mutable {
            if (!out.has_grad()) return;
            accum(xc, ArrayXd::Constant(xc.size(), out.gradvec()[0] / n));
        });
    }
    return out;
}

Tensor logsumexp(Tape* tape, const Tensor& x) {
    auto xv = x.array();
    const double mx = xv.maxCoeff();
    const ArrayXd shifted = (xv - mx).exp();
    const double s = det_sum(shifted.data(), static_cast<std::size_t>(shifted.size()));
    Tensor out = Tensor::scalar(mx + std::log(s));
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, mx, s]() mutable {
            if (!out.has_grad()) return;
            accum(xc, ((xc.array() - mx).exp() / s * out.gradvec()[0]).eval());
        });
    }
    return out;
}

Tensor logsumexp_rows(Tape* tape, const Tensor& x) {
    require_rank("logsumexp_rows", x, 2, "input");
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = Tensor::zeros({m});
    for (int r = 0; r < m; ++r) {
        Eigen::Map<const ArrayXd> row(x.data->data() + r * n, n);
        const double mx = row.maxCoeff();
        const ArrayXd shifted = (row - mx).exp();
        (*out.data)[r] =
            mx + std::log(det_sum(shifted.data(), static_cast<std::size_t>(n)));
    }
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, m, n]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            // scalar exp in a fixed-order loop: a vectorized assignment into
            // the (arbitrarily aligned) grad buffer would mix SIMD and scalar
            // exp implementations at an address-dependent boundary
            const double* xd = xc.data->data();
            double* gx = xc.grad_data();
            for (int r = 0; r < m; ++r) {
                const double o = (*out.data)[r];
                const double g = out.gradvec()[r];
                for (int j = 0; j < n; ++j)
                    gx[r * n + j] += std::exp(xd[r * n + j] - o) * g;
            }
        });
    }
    return out;
}

Tensor take_diag(Tape* tape, const Tensor& x) {
    require_rank("take_diag", x, 2, "input");
    if (x.shape[0] != x.shape[1]) fail("take_diag", "matrix not square: " + x.shape_str());
    const int m = x.shape[0];
    Tensor out = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) (*out.data)[i] = (*x.data)[i * m + i];
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        tape->record([xc, out, m]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            for (int i = 0; i < m; ++i) xc.gradvec()[i * m + i] += out.gradvec()[i];
        });
    }
    return out;
}

Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b) {
    require_rank("matmul_nt", a, 2, "lhs");
    require_rank("matmul_nt", b, 2, "rhs");
    if (a.shape[1] != b.shape[1])
        fail("matmul_nt", "inner dim mismatch " + a.shape_str() + " vs " + b.shape_str());
    const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor out = Tensor::zeros({m, n});
    MapRowC am(a.data->data(), m, k), bm(b.data->data(), n, k);
    MapRow om(out.data->data(), m, n);
    om.noalias() = am * bm.transpose();
    if (tape && any_grad({&a, &b})) {
        out.requires_grad = true;
        Tensor ac = a, bc = b;
        tape->record([ac, bc, out, m, k, n]() mutable {
            if (!out.has_grad()) return;
            MapRowC g(out.grad_data(), m, n);
            if (ac.requires_grad) {
                ac.ensure_grad();
                MapRow ga(ac.grad_data(), m, k);
                ga.noalias() += g * MapRowC(bc.data->data(), n, k);
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                MapRow gb(bc.grad_data(), n, k);
                gb.noalias() += g.transpose() * MapRowC(ac.data->data(), m, k);
            }
        });
    }
    return out;
}

Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& b) {
    require_rank("add_rowvec", a, 2, "matrix");
    require_rank("add_rowvec", b, 1, "row vector");
    const int m = a.shape[0], n = a.shape[1];
    if (b.shape[0] != n)
        fail("add_rowvec", "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    for (int r = 0; r < m; ++r)
        Eigen::Map<ArrayXd>(out.data->data() + r * n, n) =
            Eigen::Map<const ArrayXd>(a.data->data() + r * n, n) +
            Eigen::Map<const ArrayXd>(b.data->data(), n);
    if (tape && any_grad({&a, &b})) {
        out.requires_grad = true;
        Tensor ac = a, bc = b;
        tape->record([ac, bc, out, m, n]() mutable {
            if (!out.has_grad()) return;
            if (ac.requires_grad) accum(ac, out_grad(out));
            if (bc.requires_grad) {
                bc.ensure_grad();
                for (int r = 0; r < m; ++r)
                    Eigen::Map<ArrayXd>(bc.grad_data(), n) +=
                        Eigen::Map<const ArrayXd>(out.grad_data() + r * n, n);
            }
        });
    }
    return out;
}

Tensor concat_scalars(Tape* tape, const std::vector<Tensor>& xs) {
    if (xs.empty()) fail("concat_scalars", "empty input list");
    const int n = static_cast<int>(xs.size());
    Tensor out = Tensor::zeros({n});
    bool needs = false;
    for (int i = 0; i < n; ++i) {
        if (!xs[i].is_scalar())
            fail("concat_scalars", "input " + std::to_string(i) + " is not scalar: " +
                                       xs[i].shape_str());
        (*out.data)[i] = xs[i].value();
        needs = needs || xs[i].requires_grad;
    }
    if (tape && needs) {
        out.requires_grad = true;
        std::vector<Tensor> xc = xs;
        tape->record([xc, out]() mutable {
            if (!out.has_grad()) return;
            for (std::size_t i = 0; i < xc.size(); ++i)
                accum(xc[i], ArrayXd::Constant(1, out.gradvec()[i]));
        });
    }
    return out;
}

Tensor gather_hw(Tape* tape, const Tensor& x, const std::vector<std::pair<int, int>>& locations) {
    require_rank("gather_hw", x, 3, "input");
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int s = static_cast<int>(locations.size());
    if (s == 0) fail("gather_hw", "empty location list");
    for (auto [y, xx] : locations)
        if (y < 0 || y >= h || xx < 0 || xx >= w)
            fail("gather_hw", "location (" + std::to_string(y) + "," + std::to_string(xx) +
                                  ") outside " + x.shape_str());
    Tensor out = Tensor::zeros({s, c});
    for (int i = 0; i < s; ++i)
        for (int ci = 0; ci < c; ++ci)
            (*out.data)[i * c + ci] = (*x.data)[(ci * h + locations[i].first) * w +
                                                locations[i].second];
    if (tape && x.requires_grad) {
        out.requires_grad = true;
        Tensor xc = x;
        auto locs = locations;
        tape->record([xc, out, locs, c, h, w, s]() mutable {
            if (!out.has_grad()) return;
            xc.ensure_grad();
            for (int i = 0; i < s; ++i)
                for (int ci = 0; ci < c; ++ci)
                    xc.gradvec()[(ci * h + locs[i].first) * w + locs[i].second] +=
                        out.gradvec()[i * c + ci];
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& x, double cst) {
    return elementwise(
        tape, x, "scale", [cst](double v) { return cst * v; },
        [cst](double, double) { return cst; });
}

Tensor add_const(Tape* tape, const Tensor& x, double cst) {
    return elementwise(
        tape, x, "add_const", [cst](double v) { return v + cst; },
        [](double, double) { return 1.0; });
}

}  // namespace ops

namespace {

double attr(const OpAttrs& attrs, const std::string& key, double fallback) {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second;
}

const Tensor& in(const std::string& kind, const std::vector<Tensor>& xs, std::size_t i) {
    if (i >= xs.size())
        throw std::invalid_argument(kind + ": expects at least " + std::to_string(i + 1) +
                                    " inputs, got " + std::to_string(xs.size()));
    return xs[i];
}

}  // namespace

const std::vector<std::string>& registered_ops() {
    static const std::vector<std::string> names = {
        "conv2d",      "upsample_nearest2x", "instance_norm", "scale_shift",
        "leaky_relu",  "relu",               "tanh",          "linear",
        "global_avg_pool", "l2_normalize",   "add",           "sub",
        "mul",         "dot",                "exp",           "log",
        "sum",         "mean",               "logsumexp",     "logsumexp_rows",
        "take_diag",   "matmul_nt",          "add_rowvec",    "concat_scalars","gather_hw",
        "scale",       "add_const"};
    return names;
}

Tensor forward_op(Tape* tape, const std::string& kind, const std::vector<Tensor>& xs,
                  const OpAttrs& attrs) {
    using namespace ops;
    if (kind == "conv2d")
        return conv2d(tape, in(kind, xs, 0), in(kind, xs, 1), in(kind, xs, 2),
                      static_cast<int>(attr(attrs, "stride", 1)),
                      static_cast<int>(attr(attrs, "pad", 0)));
    if (kind == "upsample_nearest2x") return upsample_nearest2x(tape, in(kind, xs, 0));
    if (kind == "instance_norm")
        return instance_norm(tape, in(kind, xs, 0), attr(attrs, "eps", 1e-5));
    if (kind == "scale_shift")
        return scale_shift(tape, in(kind, xs, 0), in(kind, xs, 1), in(kind, xs, 2));
    if (kind == "leaky_relu") return leaky_relu(tape, in(kind, xs, 0), attr(attrs, "alpha", 0.2));
    if (kind == "relu") return relu(tape, in(kind, xs, 0));
    if (kind == "tanh") return tanh(tape, in(kind, xs, 0));
    if (kind == "linear")
        return linear(tape, in(kind, xs, 0), in(kind, xs, 1), in(kind, xs, 2));
    if (kind == "global_avg_pool") return global_avg_pool(tape, in(kind, xs, 0));
    if (kind == "l2_normalize") return l2_normalize(tape, in(kind, xs, 0));
    if (kind == "add") return add(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "sub") return sub(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "mul") return mul(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "dot") return dot(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "exp") return exp(tape, in(kind, xs, 0));
    if (kind == "log") return log(tape, in(kind, xs, 0));
    if (kind == "sum") return sum(tape, in(kind, xs, 0));
    if (kind == "mean") return mean(tape, in(kind, xs, 0));
    if (kind == "logsumexp") return logsumexp(tape, in(kind, xs, 0));
    if (kind == "logsumexp_rows") return logsumexp_rows(tape, in(kind, xs, 0));
    if (kind == "take_diag") return take_diag(tape, in(kind, xs, 0));
    if (kind == "matmul_nt") return matmul_nt(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "add_rowvec") return add_rowvec(tape, in(kind, xs, 0), in(kind, xs, 1));
    if (kind == "concat_scalars") return concat_scalars(tape, xs);
    if (kind == "gather_hw") {
        // locations passed as an [S,2] index tensor
        const Tensor& locs = in(kind, xs, 1);
        if (locs.rank() != 2 || locs.shape[1] != 2)
            throw std::invalid_argument("gather_hw: location tensor must be [S,2], got " +
                                        locs.shape_str());
        std::vector<std::pair<int, int>> ls;
        for (int i = 0; i < locs.shape[0]; ++i)
            ls.emplace_back(static_cast<int>((*locs.data)[i * 2]),
                            static_cast<int>((*locs.data)[i * 2 + 1]));
        return gather_hw(tape, in(kind, xs, 0), ls);
    }
    if (kind == "scale") return scale(tape, in(kind, xs, 0), attr(attrs, "c", 1.0));
    if (kind == "add_const") return add_const(tape, in(kind, xs, 0), attr(attrs, "c", 0.0));
    throw std::invalid_argument("forward_op: unknown op kind '" + kind + "'");
}

double gradient_check(const TensorFn& f, std::vector<Tensor> xs, double eps) {
    for (Tensor& x : xs) x.zero_grad();
    Tape tape;
    Tensor loss = f(&tape, xs);
    if (!loss.is_scalar())
        throw std::invalid_argument("gradient_check: f must be scalar-valued, got " +
                                    loss.shape_str());
    if (!std::isfinite(loss.value()))
        throw std::invalid_argument("gradient_check: non-finite loss at base point");
    tape.backward(loss);

    double worst = 0.0;
    for (Tensor& x : xs) {
        if (!x.requires_grad) continue;
        x.ensure_grad();
        for (std::size_t i = 0; i < x.data->size(); ++i) {
            const double saved = (*x.data)[i];
            (*x.data)[i] = saved + eps;
            const double fp = f(nullptr, xs).value();
            (*x.data)[i] = saved - eps;
            const double fm = f(nullptr, xs).value();
            (*x.data)[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::invalid_argument("gradient_check: non-finite f at probe point");
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = x.gradvec()[i];
            const double err =
                std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace exstyle
