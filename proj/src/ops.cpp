#include "postdae/ops.hpp"

#include "postdae/error.hpp"
#include "postdae/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

namespace postdae::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Products run on Eigen-owned (aligned) storage so the vectorized summation
// order depends only on the shapes, never on where a std::vector landed.
RowMat load(const double* src, Eigen::Index rows, Eigen::Index cols)
{
    return ConstMapMat(src, rows, cols);
}

void store(const RowMat& m, double* dst, bool accumulate)
{
    const auto n = static_cast<std::size_t>(m.size());
    const double* src = m.data();
    if (accumulate) {
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] += src[i];
        }
    } else {
        std::copy(src, src + n, dst);
    }
}

void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw ContractError(message);
    }
}

struct ConvGeometry {
    std::size_t n, c, h, w;   // input
    std::size_t k, kernel;    // output channels, kernel side
    std::size_t stride, pad;
    std::size_t ho, wo;

    std::size_t patch() const { return c * kernel * kernel; }
    std::size_t out_pixels() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols)
{
    const auto pixels = g.out_pixels();
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        const double* plane = x + ch * g.h * g.w;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                double* row = cols + ((ch * g.kernel + ki) * g.kernel + kj) * pixels;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(dst, dst + g.wo, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx)
{
    const auto pixels = g.out_pixels();
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        double* plane = dx + ch * g.h * g.w;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const double* row = cols + ((ch * g.kernel + ki) * g.kernel + kj) * pixels;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        continue;
                    }
                    double* dst = plane + static_cast<std::size_t>(iy) * g.w;
                    const double* src = row + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

Tensor unary_elementwise(const Tensor& x, double (*f)(double), double (*df_from_y)(double, double))
{
    std::vector<double> out(x.size());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(in[i]);
    }
    return Tensor::from_op(x.shape(), std::move(out), {x}, [df_from_y](Node& self) {
        auto& parent = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            parent.grad[i] += self.grad[i] * df_from_y(parent.data[i], self.data[i]);
        }
    });
}

} // namespace

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::upconv: return "upconv";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::softmax_channels: return "softmax_channels";
    }
    return "unknown";
}

void LayerSpec::validate() const
{
    if (stride != 1 && stride != 2) {
        throw ContractError("layer stride must be 1 or 2");
    }
    if (stride == 2 && kind != LayerKind::conv3x3 && kind != LayerKind::maxpool2x2) {
        throw ContractError("stride 2 is only valid for conv and pooling layers");
    }
    if (has_parameters() && (in_channels <= 0 || out_channels <= 0)) {
        throw ContractError("parameterized layers need positive channel counts");
    }
    if (kind == LayerKind::dense && units != out_channels) {
        throw ContractError("dense layer units must equal its output width");
    }
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride)
{
    require(input.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_string(input.shape()));
    require(weights.rank() == 4, "conv2d: weights must be [K,C,k,k]");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    const auto kernel = weights.dim(2);
    require(weights.dim(3) == kernel && (kernel == 1 || kernel == 3), "conv2d: kernel must be 1x1 or 3x3");
    require(weights.dim(1) == input.dim(1),
            "conv2d: weight channels " + std::to_string(weights.dim(1)) + " != input channels " +
                std::to_string(input.dim(1)));
    require(bias.rank() == 1 && bias.dim(0) == weights.dim(0), "conv2d: bias must be [K]");

    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weights.dim(0), kernel,
                   static_cast<std::size_t>(stride), kernel / 2, 0, 0};
    require(g.h + 2 * g.pad >= kernel && g.w + 2 * g.pad >= kernel, "conv2d: spatial dims too small");
    g.ho = (g.h + 2 * g.pad - kernel) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - kernel) / g.stride + 1;

    std::vector<double> out(g.n * g.k * g.out_pixels());
    const double* x = input.data().data();
    const auto kk = static_cast<Eigen::Index>(g.k);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pixels = static_cast<Eigen::Index>(g.out_pixels());
    const RowMat wmat = load(weights.data().data(), kk, patch);
    const auto b = bias.data();

    parallel_for(g.n, [&](std::size_t n) {
        RowMat cols(patch, pixels);
        im2col(x + n * g.c * g.h * g.w, g, cols.data());
        RowMat o(kk, pixels);
        o.noalias() = wmat * cols;
        double* dst = out.data() + n * g.k * g.out_pixels();
        store(o, dst, false);
        for (std::size_t k = 0; k < g.k; ++k) {
            for (std::size_t p = 0; p < g.out_pixels(); ++p) {
                dst[k * g.out_pixels() + p] += b[k];
            }
        }
    });

    return Tensor::from_op({g.n, g.k, g.ho, g.wo}, std::move(out), {input, weights, bias}, [g](Node& self) {
        Node& in = *self.parents[0];
        Node& w = *self.parents[1];
        Node& bn = *self.parents[2];
        const auto patch = static_cast<Eigen::Index>(g.patch());
        const auto pixels = static_cast<Eigen::Index>(g.out_pixels());
        const auto kk = static_cast<Eigen::Index>(g.k);
        const bool want_w = w.requires_grad;
        const bool want_b = bn.requires_grad;
        const bool want_x = in.requires_grad;
        const RowMat wt = want_x ? RowMat(load(w.data.data(), kk, patch).transpose()) : RowMat();

        // per-sample parameter gradients, reduced in sample order below
        std::vector<double> dw(want_w ? g.n * g.k * g.patch() : 0);
        std::vector<double> db(want_b ? g.n * g.k : 0);
        parallel_for(g.n, [&](std::size_t n) {
            const double* go = self.grad.data() + n * g.k * g.out_pixels();
            const RowMat dout = load(go, kk, pixels);
            if (want_w) {
                RowMat cols(patch, pixels);
                im2col(in.data.data() + n * g.c * g.h * g.w, g, cols.data());
                RowMat gw(kk, patch);
                gw.noalias() = dout * cols.transpose();
                store(gw, dw.data() + n * g.k * g.patch(), false);
            }
            if (want_b) {
                for (std::size_t k = 0; k < g.k; ++k) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < g.out_pixels(); ++p) {
                        acc += go[k * g.out_pixels() + p];
                    }
                    db[n * g.k + k] = acc;
                }
            }
            if (want_x) {
                RowMat cols(patch, pixels);
                cols.noalias() = wt * dout;
                col2im_add(cols.data(), g, in.grad.data() + n * g.c * g.h * g.w);
            }
        });
        for (std::size_t n = 0; n < g.n; ++n) {
            if (want_w) {
                for (std::size_t i = 0; i < w.grad.size(); ++i) {
                    w.grad[i] += dw[n * g.k * g.patch() + i];
                }
            }
            if (want_b) {
                for (std::size_t i = 0; i < g.k; ++i) {
                    bn.grad[i] += db[n * g.k + i];
                }
            }
        }
    });
}

Tensor maxpool2x2(const Tensor& input)
{
    require(input.rank() == 4, "maxpool2x2: input must be [N,C,H,W]");
    const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(h % 2 == 0 && w % 2 == 0, "maxpool2x2: spatial dims must be even, got " + shape_string(input.shape()));
    const auto ho = h / 2, wo = w / 2;
    std::vector<double> out(n * c * ho * wo);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto x = input.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t best = base + (2 * oy) * w + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if (x[idx] > x[best]) {
                            best = idx;
                        }
                    }
                }
                const std::size_t o = plane * ho * wo + oy * wo + ox;
                out[o] = x[best];
                (*argmax)[o] = best;
            }
        }
    }
    return Tensor::from_op({n, c, ho, wo}, std::move(out), {input}, [argmax](Node& self) {
        auto& parent = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            parent.grad[(*argmax)[i]] += self.grad[i];
        }
    });
}

Tensor upsample2x(const Tensor& input)
{
    require(input.rank() == 4, "upsample2x: input must be [N,C,H,W]");
    const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto ho = 2 * h, wo = 2 * w;
    std::vector<double> out(n * c * ho * wo);
    const auto x = input.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            const double* src = x.data() + plane * h * w + (oy / 2) * w;
            double* dst = out.data() + plane * ho * wo + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
                dst[ox] = src[ox / 2];
            }
        }
    }
    return Tensor::from_op({n, c, ho, wo}, std::move(out), {input}, [n, c, h, w](Node& self) {
        auto& parent = *self.parents[0];
        const auto ho = 2 * h, wo = 2 * w;
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
                double* dst = parent.grad.data() + plane * h * w + (oy / 2) * w;
                const double* src = self.grad.data() + plane * ho * wo + oy * wo;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    dst[ox / 2] += src[ox];
                }
            }
        }
    });
}

Tensor upconv(const Tensor& input, const Tensor& weights, const Tensor& bias)
{
    require(weights.rank() == 4 && weights.dim(2) == 3, "upconv: weights must be [K,C,3,3]");
    return conv2d(upsample2x(input), weights, bias, 1);
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias)
{
    require(input.rank() == 2, "dense: input must be [N,D], got " + shape_string(input.shape()));
    require(weights.rank() == 2 && weights.dim(0) == input.dim(1),
            "dense: weights must be [D,U] with D=" + std::to_string(input.dim(1)));
    require(bias.rank() == 1 && bias.dim(0) == weights.dim(1), "dense: bias must be [U]");
    const auto n = static_cast<Eigen::Index>(input.dim(0));
    const auto d = static_cast<Eigen::Index>(input.dim(1));
    const auto u = static_cast<Eigen::Index>(weights.dim(1));
    std::vector<double> out(static_cast<std::size_t>(n * u));
    RowMat o(n, u);
    o.noalias() = load(input.data().data(), n, d) * load(weights.data().data(), d, u);
    store(o, out.data(), false);
    const auto b = bias.data();
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < u; ++c) {
            out[static_cast<std::size_t>(r * u + c)] += b[static_cast<std::size_t>(c)];
        }
    }
    return Tensor::from_op({input.dim(0), weights.dim(1)}, std::move(out), {input, weights, bias},
                           [n, d, u](Node& self) {
                               Node& x = *self.parents[0];
                               Node& w = *self.parents[1];
                               Node& b = *self.parents[2];
                               const RowMat dy = load(self.grad.data(), n, u);
                               if (x.requires_grad) {
                                   RowMat gx(n, d);
                                   gx.noalias() = dy * load(w.data.data(), d, u).transpose();
                                   store(gx, x.grad.data(), true);
                               }
                               if (w.requires_grad) {
                                   RowMat gw(d, u);
                                   gw.noalias() = load(x.data.data(), n, d).transpose() * dy;
                                   store(gw, w.grad.data(), true);
                               }
                               if (b.requires_grad) {
                                   for (Eigen::Index r = 0; r < n; ++r) {
                                       for (Eigen::Index c = 0; c < u; ++c) {
                                           b.grad[static_cast<std::size_t>(c)] += self.grad[static_cast<std::size_t>(r * u + c)];
                                       }
                                   }
                               }
                           });
}

Tensor relu(const Tensor& x)
{
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x)
{
    return unary_elementwise(
        x,
        [](double v) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax_channels(const Tensor& x)
{
    require(x.rank() >= 2, "softmax_channels: input needs a channel axis");
    const auto n = x.dim(0);
    const auto c = x.dim(1);
    const auto inner = x.size() / (n * c);
    std::vector<double> out(x.size());
    const auto in = x.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < inner; ++p) {
            const std::size_t base = b * c * inner + p;
            double best = in[base];
            for (std::size_t ch = 1; ch < c; ++ch) {
                best = std::max(best, in[base + ch * inner]);
            }
            double z = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                out[base + ch * inner] = std::exp(in[base + ch * inner] - best);
                z += out[base + ch * inner];
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                out[base + ch * inner] /= z;
            }
        }
    }
    return Tensor::from_op(x.shape(), std::move(out), {x}, [n, c, inner](Node& self) {
        auto& parent = *self.parents[0];
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t p = 0; p < inner; ++p) {
                const std::size_t base = b * c * inner + p;
                double dot = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    dot += self.grad[base + ch * inner] * self.data[base + ch * inner];
                }
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t i = base + ch * inner;
                    parent.grad[i] += self.data[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape)
{
    require(numel(shape) == x.size(),
            "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    std::vector<double> data(x.data().begin(), x.data().end());
    return Tensor::from_op(std::move(shape), std::move(data), {x}, [](Node& self) {
        auto& parent = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            parent.grad[i] += self.grad[i];
        }
    });
}

Tensor sum(const Tensor& x)
{
    double total = 0.0;
    for (double v : x.data()) {
        total += v;
    }
    return Tensor::from_op({1}, {total}, {x}, [](Node& self) {
        auto& parent = *self.parents[0];
        for (double& g : parent.grad) {
            g += self.grad[0];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] * b.data()[i];
    }
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) {
                pa.grad[i] += self.grad[i] * pb.data[i];
            }
            if (pb.requires_grad) {
                pb.grad[i] += self.grad[i] * pa.data[i];
            }
        }
    });
}

Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, double eps)
{
    require(pred.shape() == target.shape(), "soft_dice_loss: pred " + shape_string(pred.shape()) +
                                                " and target " + shape_string(target.shape()) + " differ");
    require(pred.rank() >= 2, "soft_dice_loss: expected [N,C,...]");
    require(eps > 0.0, "soft_dice_loss: eps must be positive");
    const auto n = pred.dim(0);
    const auto c = pred.dim(1);
    const auto inner = pred.size() / (n * c);
    const std::size_t first = c == 1 ? 0 : 1;
    const auto terms = static_cast<double>(n * (c - first));
    const auto p = pred.data();
    const auto t = target.data();

    // per (sample, channel): intersection, pred sum, target sum
    auto stats = std::make_shared<std::vector<double>>(3 * n * c, 0.0);
    double dice_total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = first; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * inner;
            double inter = 0.0, ps = 0.0, ts = 0.0;
            for (std::size_t i = 0; i < inner; ++i) {
                inter += p[base + i] * t[base + i];
                ps += p[base + i];
                ts += t[base + i];
            }
            (*stats)[3 * (b * c + ch)] = inter;
            (*stats)[3 * (b * c + ch) + 1] = ps;
            (*stats)[3 * (b * c + ch) + 2] = ts;
            dice_total += (2.0 * inter + eps) / (ps + ts + eps);
        }
    }
    const double loss = 1.0 - dice_total / terms;
    return Tensor::from_op({1}, {loss}, {pred, target},
                           [stats, n, c, inner, first, terms, eps](Node& self) {
                               Node& pn = *self.parents[0];
                               const Node& tn = *self.parents[1];
                               if (!pn.requires_grad) {
                                   return;
                               }
                               const double g = self.grad[0];
                               for (std::size_t b = 0; b < n; ++b) {
                                   for (std::size_t ch = first; ch < c; ++ch) {
                                       const std::size_t s = 3 * (b * c + ch);
                                       const double num = 2.0 * (*stats)[s] + eps;
                                       const double den = (*stats)[s + 1] + (*stats)[s + 2] + eps;
                                       const double inv = 1.0 / (den * den);
                                       const std::size_t base = (b * c + ch) * inner;
                                       for (std::size_t i = 0; i < inner; ++i) {
                                           const double dd = (2.0 * tn.data[base + i] * den - num) * inv;
                                           pn.grad[base + i] -= g * dd / terms;
                                       }
                                   }
                               }
                           });
}

} // namespace postdae::ad
