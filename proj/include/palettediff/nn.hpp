#pragma once

// Minimal convolutional building blocks with hand-written backward passes.
// Activations are (channels x batch*height*width) column-major matrices;
// column (b*H + y)*W + x holds the channel vector of pixel (x, y) of sample b.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace palettediff::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Geometry {
  int batch = 1;
  int height = 1;
  int width = 1;

  int pixels() const noexcept { return height * width; }
  int columns() const noexcept { return batch * height * width; }
  Geometry halved() const noexcept { return {batch, height / 2, width / 2}; }
  Geometry doubled() const noexcept { return {batch, height * 2, width * 2}; }
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

template <typename Scalar>
struct Param {
  Mat<Scalar> value;
  Mat<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Init { lecun, zero };

template <typename Scalar>
void initialize(Param<Scalar>& p, Eigen::Index rows, Eigen::Index cols, int fan_in, Init init, std::mt19937_64& rng) {
  p.value.resize(rows, cols);
  if (init == Init::zero) {
    p.value.setZero();
  } else {
    const double bound = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
  }
  p.zero_grad();
}

template <typename Scalar>
Mat<Scalar> silu(const Mat<Scalar>& x) {
  return (x.array() / (Scalar(1) + (-x.array()).exp())).matrix();
}

/// dL/dx given dL/dy and the pre-activation x.
template <typename Scalar>
Mat<Scalar> silu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
  const auto s = (Scalar(1) / (Scalar(1) + (-x.array()).exp())).eval();
  return (dy.array() * s * (Scalar(1) + x.array() * (Scalar(1) - s))).matrix();
}

/// Square convolution with zero padding k/2; kernel 1 or 3, stride 1 or 2.
template <typename Scalar>
class Conv2d {
 public:
  struct Cache {
    Mat<Scalar> col;
    Geometry in;
  };

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, Init init, std::mt19937_64& rng)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride) {
    const int fan_in = in_channels * kernel * kernel;
    initialize(weight, out_channels, fan_in, fan_in, init, rng);
    initialize(bias, out_channels, 1, fan_in, Init::zero, rng);
  }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }

  Geometry output_geometry(const Geometry& g) const noexcept { return stride_ == 2 ? g.halved() : g; }

  Mat<Scalar> forward(const Mat<Scalar>& x, const Geometry& g, Cache* cache) const {
    Mat<Scalar> y;
    if (kernel_ == 1 && stride_ == 1) {
      y.noalias() = weight.value * x;
      if (cache) cache->col = x;
    } else {
      Mat<Scalar> col = im2col(x, g);
      y.noalias() = weight.value * col;
      if (cache) cache->col = std::move(col);
    }
    y.colwise() += bias.value.col(0);
    if (cache) cache->in = g;
    return y;
  }

  /// Accumulates parameter gradients when requested; returns dL/dx when requested.
  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, bool want_dx, bool param_grads) {
    if (param_grads) {
      weight.grad.noalias() += dy * cache.col.transpose();
      bias.grad.col(0) += dy.rowwise().sum();
    }
    if (!want_dx) return {};
    Mat<Scalar> dcol;
    dcol.noalias() = weight.value.transpose() * dy;
    if (kernel_ == 1 && stride_ == 1) return dcol;
    return col2im(dcol, cache.in);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Param<Scalar> weight;  // out x (k*k*in), column index (ky*k + kx)*in + c
  Param<Scalar> bias;

 private:
  Mat<Scalar> im2col(const Mat<Scalar>& x, const Geometry& g) const {
    const Geometry og = output_geometry(g);
    const int pad = kernel_ / 2;
    Mat<Scalar> col = Mat<Scalar>::Zero(static_cast<Eigen::Index>(kernel_) * kernel_ * in_, og.columns());
    for (int b = 0; b < g.batch; ++b) {
      for (int oy = 0; oy < og.height; ++oy) {
        for (int ox = 0; ox < og.width; ++ox) {
          const Eigen::Index j = (static_cast<Eigen::Index>(b) * og.height + oy) * og.width + ox;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ + ky - pad;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ + kx - pad;
              if (ix < 0 || ix >= g.width) continue;
              col.col(j).segment((ky * kernel_ + kx) * in_, in_) =
                  x.col((static_cast<Eigen::Index>(b) * g.height + iy) * g.width + ix);
            }
          }
        }
      }
    }
    return col;
  }

  Mat<Scalar> col2im(const Mat<Scalar>& dcol, const Geometry& g) const {
    const Geometry og = output_geometry(g);
    const int pad = kernel_ / 2;
    Mat<Scalar> dx = Mat<Scalar>::Zero(in_, g.columns());
    for (int b = 0; b < g.batch; ++b) {
      for (int oy = 0; oy < og.height; ++oy) {
        for (int ox = 0; ox < og.width; ++ox) {
          const Eigen::Index j = (static_cast<Eigen::Index>(b) * og.height + oy) * og.width + ox;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ + ky - pad;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ + kx - pad;
              if (ix < 0 || ix >= g.width) continue;
              dx.col((static_cast<Eigen::Index>(b) * g.height + iy) * g.width + ix) +=
                  dcol.col(j).segment((ky * kernel_ + kx) * in_, in_);
            }
          }
        }
      }
    }
    return dx;
  }

  int in_ = 0;
  int out_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
};

template <typename Scalar>
class Linear {
 public:
  struct Cache {
    Mat<Scalar> x;
  };

  Linear() = default;
  Linear(int in, int out, Init init, std::mt19937_64& rng) {
    initialize(weight, out, in, in, init, rng);
    initialize(bias, out, 1, in, Init::zero, rng);
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, Cache* cache) const {
    Mat<Scalar> y;
    y.noalias() = weight.value * x;
    y.colwise() += bias.value.col(0);
    if (cache) cache->x = x;
    return y;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy, bool param_grads) {
    if (param_grads) {
      weight.grad.noalias() += dy * cache.x.transpose();
      bias.grad.col(0) += dy.rowwise().sum();
    }
    Mat<Scalar> dx;
    dx.noalias() = weight.value.transpose() * dy;
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Param<Scalar> weight;
  Param<Scalar> bias;
};

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
Mat<Scalar> upsample2x(const Mat<Scalar>& x, const Geometry& g) {
  const Geometry og = g.doubled();
  Mat<Scalar> y(x.rows(), og.columns());
  for (int b = 0; b < og.batch; ++b)
    for (int oy = 0; oy < og.height; ++oy)
      for (int ox = 0; ox < og.width; ++ox)
        y.col((static_cast<Eigen::Index>(b) * og.height + oy) * og.width + ox) =
            x.col((static_cast<Eigen::Index>(b) * g.height + oy / 2) * g.width + ox / 2);
  return y;
}

template <typename Scalar>
Mat<Scalar> upsample2x_backward(const Mat<Scalar>& dy, const Geometry& g) {
  const Geometry og = g.doubled();
  Mat<Scalar> dx = Mat<Scalar>::Zero(dy.rows(), g.columns());
  for (int b = 0; b < og.batch; ++b)
    for (int oy = 0; oy < og.height; ++oy)
      for (int ox = 0; ox < og.width; ++ox)
        dx.col((static_cast<Eigen::Index>(b) * g.height + oy / 2) * g.width + ox / 2) +=
            dy.col((static_cast<Eigen::Index>(b) * og.height + oy) * og.width + ox);
  return dx;
}

/// Residual block: x + conv2(silu(conv1(silu(x)) + proj(temb))), with a 1x1
/// projection on the shortcut when the channel count changes.
template <typename Scalar>
class ResBlock {
 public:
  struct Cache {
    Mat<Scalar> x;
    Mat<Scalar> h;  // conv1 output plus time projection
    typename Conv2d<Scalar>::Cache conv1, conv2, shortcut;
    typename Linear<Scalar>::Cache temb;
    Geometry geom;
  };

  ResBlock() = default;
  ResBlock(int in, int out, int temb_dim, std::mt19937_64& rng)
      : conv1(in, out, 3, 1, Init::lecun, rng),
        conv2(out, out, 3, 1, Init::zero, rng),
        temb_proj(temb_dim, out, Init::lecun, rng),
        has_shortcut_(in != out) {
    if (has_shortcut_) shortcut = Conv2d<Scalar>(in, out, 1, 1, Init::lecun, rng);
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, const Geometry& g, const Mat<Scalar>& temb_act, Cache* cache) const {
    Mat<Scalar> h = conv1.forward(silu(x), g, cache ? &cache->conv1 : nullptr);
    const Mat<Scalar> tp = temb_proj.forward(temb_act, cache ? &cache->temb : nullptr);
    const int p = g.pixels();
    for (int b = 0; b < g.batch; ++b) h.middleCols(static_cast<Eigen::Index>(b) * p, p).colwise() += tp.col(b);
    Mat<Scalar> y = conv2.forward(silu(h), g, cache ? &cache->conv2 : nullptr);
    if (has_shortcut_) {
      y += shortcut.forward(x, g, cache ? &cache->shortcut : nullptr);
    } else {
      y += x;
    }
    if (cache) {
      cache->x = x;
      cache->h = std::move(h);
      cache->geom = g;
    }
    return y;
  }

  /// Returns dL/dx and accumulates dL/d(temb_act) into d_temb.
  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dy, bool param_grads, Mat<Scalar>& d_temb) {
    Mat<Scalar> dh = silu_backward(c.h, conv2.backward(c.conv2, dy, true, param_grads));
    const int p = c.geom.pixels();
    Mat<Scalar> dtp(dh.rows(), c.geom.batch);
    for (int b = 0; b < c.geom.batch; ++b) {
      dtp.col(b) = dh.middleCols(static_cast<Eigen::Index>(b) * p, p).rowwise().sum();
    }
    d_temb += temb_proj.backward(c.temb, dtp, param_grads);
    Mat<Scalar> dx = silu_backward(c.x, conv1.backward(c.conv1, dh, true, param_grads));
    if (has_shortcut_) {
      dx += shortcut.backward(c.shortcut, dy, true, param_grads);
    } else {
      dx += dy;
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv1.visit(prefix + ".conv1", f);
    conv2.visit(prefix + ".conv2", f);
    temb_proj.visit(prefix + ".temb", f);
    if (has_shortcut_) shortcut.visit(prefix + ".shortcut", f);
  }

  Conv2d<Scalar> conv1;
  Conv2d<Scalar> conv2;
  Linear<Scalar> temb_proj;
  Conv2d<Scalar> shortcut;

 private:
  bool has_shortcut_ = false;
};

/// Sinusoidal timestep features, dim x batch.
template <typename Scalar>
Mat<Scalar> timestep_features(const std::vector<int>& t, int dim) {
  Mat<Scalar> out(dim, static_cast<Eigen::Index>(t.size()));
  const int half = dim / 2;
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out(i, static_cast<Eigen::Index>(b)) = static_cast<Scalar>(std::sin(t[b] * freq));
      out(i + half, static_cast<Eigen::Index>(b)) = static_cast<Scalar>(std::cos(t[b] * freq));
    }
    if (dim % 2) out(dim - 1, static_cast<Eigen::Index>(b)) = Scalar(0);
  }
  return out;
}

}  // namespace palettediff::nn
