#pragma once

// Frozen-base U-Net epsilon predictor with a trainable control encoder whose
// per-scale outputs pass through zero-initialized 1x1 projections and are
// added to the base network's skip and middle features.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "palettediff/nn.hpp"

namespace palettediff {

struct ModelConfig {
  int image_size = 32;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 2};
  int cond_channels = 7;

  int levels() const noexcept { return static_cast<int>(channel_multipliers.size()); }
  int time_dim() const noexcept { return 4 * base_channels; }
  int downsample_factor() const noexcept { return 1 << (levels() - 1); }
  int channels(int level) const { return base_channels * channel_multipliers.at(static_cast<std::size_t>(level)); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace nn {

/// Timestep MLP plus the downsampling half of the U-Net.
template <typename Scalar>
class Encoder {
 public:
  struct Output {
    std::vector<Mat<Scalar>> skips;  // one per level
    std::vector<Geometry> geoms;
    Mat<Scalar> mid;
    Mat<Scalar> temb_act;  // silu(temb), time_dim x batch
  };
  struct Cache {
    typename Linear<Scalar>::Cache t1, t2;
    Mat<Scalar> t1_out, t2_out;
    typename Conv2d<Scalar>::Cache in_conv;
    std::vector<typename ResBlock<Scalar>::Cache> blocks;
    std::vector<typename Conv2d<Scalar>::Cache> downs;
    typename ResBlock<Scalar>::Cache mid;
    std::vector<Geometry> geoms;
  };

  Encoder() = default;
  Encoder(const ModelConfig& cfg, int in_channels, std::mt19937_64& rng);

  /// `in_add`, when given, is added to the input convolution's output.
  Output forward(const Mat<Scalar>& x, const Geometry& g, const std::vector<int>& t, const Mat<Scalar>* in_add,
                 Cache* cache) const;

  /// Backpropagates gradients w.r.t. the outputs; returns dL/d(in_add).
  Mat<Scalar> backward(const Cache& c, std::vector<Mat<Scalar>> d_skips, Mat<Scalar> d_mid, Mat<Scalar> d_temb_act,
                       bool param_grads);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    time1.visit(prefix + ".time1", f);
    time2.visit(prefix + ".time2", f);
    in_conv.visit(prefix + ".in_conv", f);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    for (std::size_t i = 0; i < downs.size(); ++i) downs[i].visit(prefix + ".down" + std::to_string(i), f);
    mid.visit(prefix + ".mid", f);
  }

  ModelConfig config;
  Linear<Scalar> time1, time2;
  Conv2d<Scalar> in_conv;
  std::vector<ResBlock<Scalar>> blocks;
  std::vector<Conv2d<Scalar>> downs;
  ResBlock<Scalar> mid;
};

/// Upsampling half of the U-Net, ending in the 3-channel epsilon head.
template <typename Scalar>
class Decoder {
 public:
  struct Cache {
    std::vector<typename ResBlock<Scalar>::Cache> blocks;  // indexed by level
    std::vector<typename Conv2d<Scalar>::Cache> ups;       // indexed by level (unused at 0)
    std::vector<Geometry> geoms;
    Mat<Scalar> pre_out;
    typename Conv2d<Scalar>::Cache out_conv;
  };
  struct Gradients {
    std::vector<Mat<Scalar>> skips;
    Mat<Scalar> mid;
    Mat<Scalar> temb_act;
  };

  Decoder() = default;
  Decoder(const ModelConfig& cfg, std::mt19937_64& rng);

  Mat<Scalar> forward(const typename Encoder<Scalar>::Output& enc, Cache* cache) const;
  Gradients backward(const Cache& c, const Mat<Scalar>& d_out, bool param_grads);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    for (std::size_t i = 1; i < ups.size(); ++i) ups[i].visit(prefix + ".up" + std::to_string(i), f);
    out_conv.visit(prefix + ".out_conv", f);
  }

  ModelConfig config;
  std::vector<ResBlock<Scalar>> blocks;
  std::vector<Conv2d<Scalar>> ups;
  Conv2d<Scalar> out_conv;
};

/// Condition pre-processing of the control encoder (7 -> C channels), final conv zero-initialized.
template <typename Scalar>
class HintNet {
 public:
  struct Cache {
    typename Conv2d<Scalar>::Cache c1, c2;
    Mat<Scalar> h1;
  };

  HintNet() = default;
  HintNet(const ModelConfig& cfg, std::mt19937_64& rng)
      : conv1(cfg.cond_channels, cfg.base_channels, 3, 1, Init::lecun, rng),
        conv2(cfg.base_channels, cfg.base_channels, 3, 1, Init::lecun, rng) {}

  Mat<Scalar> forward(const Mat<Scalar>& cond, const Geometry& g, Cache* cache) const {
    Mat<Scalar> h1 = conv1.forward(cond, g, cache ? &cache->c1 : nullptr);
    Mat<Scalar> y = conv2.forward(silu(h1), g, cache ? &cache->c2 : nullptr);
    if (cache) cache->h1 = std::move(h1);
    return y;
  }

  void backward(const Cache& c, const Mat<Scalar>& dy, bool param_grads) {
    const Mat<Scalar> dh = silu_backward(c.h1, conv2.backward(c.c2, dy, true, param_grads));
    conv1.backward(c.c1, dh, false, param_grads);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv1.visit(prefix + ".conv1", f);
    conv2.visit(prefix + ".conv2", f);
  }

  Conv2d<Scalar> conv1, conv2;
};

/// Residuals injected into the base decoder.
template <typename Scalar>
struct ControlResiduals {
  std::vector<Mat<Scalar>> skips;
  Mat<Scalar> mid;
};

template <typename Scalar>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  /// Re-creates the control branch: encoder copied from the base, zero projections.
  void reset_control(std::uint64_t seed);

  /// Epsilon prediction. `cond` (7 x columns) may be null for the base-only path.
  Mat<Scalar> predict_eps(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                          const Mat<Scalar>* cond) const;

  ControlResiduals<Scalar> control_residuals(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                                             const Mat<Scalar>& cond) const;

  /// MSE(eps_hat, eps) and its gradient w.r.t. the base parameters (no control branch).
  Scalar base_loss_and_grad(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                            const Mat<Scalar>& eps);

  /// MSE(eps_hat, eps) and its gradient w.r.t. the control parameters only.
  Scalar control_loss_and_grad(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                               const Mat<Scalar>& cond, const Mat<Scalar>& eps);

  using Visitor = std::function<void(const std::string&, Param<Scalar>&)>;
  using ConstVisitor = std::function<void(const std::string&, const Param<Scalar>&)>;
  void visit_base(const Visitor& f);
  void visit_control(const Visitor& f);
  void visit_base(const ConstVisitor& f) const;
  void visit_control(const ConstVisitor& f) const;

  void zero_grad();

  Encoder<Scalar> base_encoder;
  Decoder<Scalar> base_decoder;
  Encoder<Scalar> control_encoder;
  HintNet<Scalar> hint;
  std::vector<Conv2d<Scalar>> zero_skips;
  Conv2d<Scalar> zero_mid;

 private:
  void check_input(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t) const;

  ModelConfig config_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace nn
}  // namespace palettediff
