#include "palettediff/unet.hpp"

#include "palettediff/error.hpp"

namespace palettediff {

void ModelConfig::validate() const {
  if (channel_multipliers.empty()) throw Error(Errc::invalid_argument, "at least one resolution level is required");
  if (base_channels < 2 || base_channels % 2) throw Error(Errc::invalid_argument, "base_channels must be even");
  for (int m : channel_multipliers) {
    if (m < 1) throw Error(Errc::invalid_argument, "channel multipliers must be positive");
  }
  if (image_size < 1 || image_size % downsample_factor() != 0) {
    throw Error(Errc::invalid_argument, "image_size must be divisible by 2^(levels-1)");
  }
  if (cond_channels != 7) throw Error(Errc::invalid_argument, "conditioning has exactly 7 channels");
}

namespace nn {

template <typename Scalar>
Encoder<Scalar>::Encoder(const ModelConfig& cfg, int in_channels, std::mt19937_64& rng)
    : config(cfg),
      time1(cfg.base_channels, cfg.time_dim(), Init::lecun, rng),
      time2(cfg.time_dim(), cfg.time_dim(), Init::lecun, rng),
      in_conv(in_channels, cfg.base_channels, 3, 1, Init::lecun, rng) {
  int prev = cfg.base_channels;
  for (int i = 0; i < cfg.levels(); ++i) {
    blocks.emplace_back(prev, cfg.channels(i), cfg.time_dim(), rng);
    prev = cfg.channels(i);
    if (i + 1 < cfg.levels()) downs.emplace_back(prev, prev, 3, 2, Init::lecun, rng);
  }
  mid = ResBlock<Scalar>(prev, prev, cfg.time_dim(), rng);
}

template <typename Scalar>
typename Encoder<Scalar>::Output Encoder<Scalar>::forward(const Mat<Scalar>& x, const Geometry& g,
                                                          const std::vector<int>& t, const Mat<Scalar>* in_add,
                                                          Cache* cache) const {
  const int levels = config.levels();
  if (cache) {
    cache->blocks.resize(static_cast<std::size_t>(levels));
    cache->downs.resize(downs.size());
  }
  Output out;
  Mat<Scalar> t1 = time1.forward(timestep_features<Scalar>(t, config.base_channels), cache ? &cache->t1 : nullptr);
  Mat<Scalar> t2 = time2.forward(silu(t1), cache ? &cache->t2 : nullptr);
  out.temb_act = silu(t2);
  if (cache) {
    cache->t1_out = std::move(t1);
    cache->t2_out = std::move(t2);
  }

  Mat<Scalar> h = in_conv.forward(x, g, cache ? &cache->in_conv : nullptr);
  if (in_add) h += *in_add;
  Geometry geom = g;
  for (int i = 0; i < levels; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    h = blocks[ui].forward(h, geom, out.temb_act, cache ? &cache->blocks[ui] : nullptr);
    out.skips.push_back(h);
    out.geoms.push_back(geom);
    if (i + 1 < levels) {
      h = downs[ui].forward(h, geom, cache ? &cache->downs[ui] : nullptr);
      geom = geom.halved();
    }
  }
  out.mid = mid.forward(h, geom, out.temb_act, cache ? &cache->mid : nullptr);
  if (cache) cache->geoms = out.geoms;
  return out;
}

template <typename Scalar>
Mat<Scalar> Encoder<Scalar>::backward(const Cache& c, std::vector<Mat<Scalar>> d_skips, Mat<Scalar> d_mid,
                                      Mat<Scalar> d_temb_act, bool param_grads) {
  const int levels = config.levels();
  Mat<Scalar> dh = mid.backward(c.mid, d_mid, param_grads, d_temb_act);
  for (int i = levels - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    dh += d_skips[ui];
    dh = blocks[ui].backward(c.blocks[ui], dh, param_grads, d_temb_act);
    if (i > 0) dh = downs[ui - 1].backward(c.downs[ui - 1], dh, true, param_grads);
  }
  if (param_grads) {
    in_conv.backward(c.in_conv, dh, false, true);
    const Mat<Scalar> d_t2 = silu_backward(c.t2_out, d_temb_act);
    const Mat<Scalar> d_t1 = silu_backward(c.t1_out, time2.backward(c.t2, d_t2, true));
    time1.backward(c.t1, d_t1, true);
  }
  return dh;
}

template <typename Scalar>
Decoder<Scalar>::Decoder(const ModelConfig& cfg, std::mt19937_64& rng) : config(cfg) {
  const int levels = cfg.levels();
  blocks.resize(static_cast<std::size_t>(levels));
  ups.resize(static_cast<std::size_t>(levels));
  for (int i = levels - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    blocks[ui] = ResBlock<Scalar>(2 * cfg.channels(i), cfg.channels(i), cfg.time_dim(), rng);
    if (i > 0) ups[ui] = Conv2d<Scalar>(cfg.channels(i), cfg.channels(i - 1), 3, 1, Init::lecun, rng);
  }
  out_conv = Conv2d<Scalar>(cfg.base_channels, 3, 3, 1, Init::zero, rng);
}

template <typename Scalar>
Mat<Scalar> Decoder<Scalar>::forward(const typename Encoder<Scalar>::Output& enc, Cache* cache) const {
  const int levels = config.levels();
  if (cache) {
    cache->blocks.resize(static_cast<std::size_t>(levels));
    cache->ups.resize(static_cast<std::size_t>(levels));
    cache->geoms = enc.geoms;
  }
  Mat<Scalar> h = enc.mid;
  for (int i = levels - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    Mat<Scalar> cat(h.rows() + enc.skips[ui].rows(), h.cols());
    cat << h, enc.skips[ui];
    h = blocks[ui].forward(cat, enc.geoms[ui], enc.temb_act, cache ? &cache->blocks[ui] : nullptr);
    if (i > 0) {
      h = ups[ui].forward(upsample2x(h, enc.geoms[ui]), enc.geoms[ui - 1], cache ? &cache->ups[ui] : nullptr);
    }
  }
  Mat<Scalar> out = out_conv.forward(silu(h), enc.geoms[0], cache ? &cache->out_conv : nullptr);
  if (cache) cache->pre_out = std::move(h);
  return out;
}

template <typename Scalar>
typename Decoder<Scalar>::Gradients Decoder<Scalar>::backward(const Cache& c, const Mat<Scalar>& d_out,
                                                              bool param_grads) {
  const int levels = config.levels();
  Gradients grads;
  grads.skips.resize(static_cast<std::size_t>(levels));
  grads.temb_act = Mat<Scalar>::Zero(config.time_dim(), c.geoms[0].batch);
  Mat<Scalar> dh = silu_backward(c.pre_out, out_conv.backward(c.out_conv, d_out, true, param_grads));
  for (int i = 0; i < levels; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Mat<Scalar> dcat = blocks[ui].backward(c.blocks[ui], dh, param_grads, grads.temb_act);
    const Eigen::Index skip_rows = config.channels(i);
    grads.skips[ui] = dcat.bottomRows(skip_rows);
    if (i + 1 < levels) {
      const Mat<Scalar> dup = ups[ui + 1].backward(c.ups[ui + 1], dcat.topRows(dcat.rows() - skip_rows), true,
                                                   param_grads);
      dh = upsample2x_backward(dup, c.geoms[ui + 1]);
    } else {
      grads.mid = dcat.topRows(dcat.rows() - skip_rows);
    }
  }
  return grads;
}

template <typename Scalar>
Denoiser<Scalar>::Denoiser(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  base_encoder = Encoder<Scalar>(cfg, 3, rng);
  base_decoder = Decoder<Scalar>(cfg, rng);
  reset_control(seed ^ 0x9e3779b97f4a7c15ULL);
}

template <typename Scalar>
void Denoiser<Scalar>::reset_control(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  control_encoder = base_encoder;
  control_encoder.visit("", [](const std::string&, Param<Scalar>& p) { p.zero_grad(); });
  hint = HintNet<Scalar>(config_, rng);
  zero_skips.clear();
  for (int i = 0; i < config_.levels(); ++i) {
    zero_skips.emplace_back(config_.channels(i), config_.channels(i), 1, 1, Init::zero, rng);
  }
  const int top = config_.channels(config_.levels() - 1);
  zero_mid = Conv2d<Scalar>(top, top, 1, 1, Init::zero, rng);
}

template <typename Scalar>
void Denoiser<Scalar>::check_input(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t) const {
  if (x_t.rows() != 3 || x_t.cols() != g.columns()) throw Error(Errc::shape_mismatch, "x_t does not match geometry");
  const int f = config_.downsample_factor();
  if (g.height % f || g.width % f || g.height < f || g.width < f) {
    throw Error(Errc::shape_mismatch, "image sides must be positive multiples of " + std::to_string(f));
  }
  if (static_cast<int>(t.size()) != g.batch) throw Error(Errc::shape_mismatch, "one timestep per sample required");
}

template <typename Scalar>
ControlResiduals<Scalar> Denoiser<Scalar>::control_residuals(const Mat<Scalar>& x_t, const Geometry& g,
                                                             const std::vector<int>& t,
                                                             const Mat<Scalar>& cond) const {
  check_input(x_t, g, t);
  if (cond.rows() != config_.cond_channels || cond.cols() != g.columns()) {
    throw Error(Errc::shape_mismatch, "conditioning does not match geometry");
  }
  const Mat<Scalar> hint_out = hint.forward(cond, g, nullptr);
  const auto enc = control_encoder.forward(x_t, g, t, &hint_out, nullptr);
  ControlResiduals<Scalar> res;
  for (std::size_t i = 0; i < zero_skips.size(); ++i) {
    res.skips.push_back(zero_skips[i].forward(enc.skips[i], enc.geoms[i], nullptr));
  }
  res.mid = zero_mid.forward(enc.mid, enc.geoms.back(), nullptr);
  return res;
}

template <typename Scalar>
Mat<Scalar> Denoiser<Scalar>::predict_eps(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                                          const Mat<Scalar>* cond) const {
  check_input(x_t, g, t);
  auto enc = base_encoder.forward(x_t, g, t, nullptr, nullptr);
  if (cond) {
    const auto res = control_residuals(x_t, g, t, *cond);
    for (std::size_t i = 0; i < res.skips.size(); ++i) enc.skips[i] += res.skips[i];
    enc.mid += res.mid;
  }
  return base_decoder.forward(enc, nullptr);
}

template <typename Scalar>
Scalar Denoiser<Scalar>::base_loss_and_grad(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                                            const Mat<Scalar>& eps) {
  check_input(x_t, g, t);
  typename Encoder<Scalar>::Cache ec;
  typename Decoder<Scalar>::Cache dc;
  const auto enc = base_encoder.forward(x_t, g, t, nullptr, &ec);
  const Mat<Scalar> diff = base_decoder.forward(enc, &dc) - eps;
  const Scalar n = static_cast<Scalar>(diff.size());
  const auto grads = base_decoder.backward(dc, (Scalar(2) / n) * diff, true);
  base_encoder.backward(ec, grads.skips, grads.mid, grads.temb_act, true);
  return diff.squaredNorm() / n;
}

template <typename Scalar>
Scalar Denoiser<Scalar>::control_loss_and_grad(const Mat<Scalar>& x_t, const Geometry& g, const std::vector<int>& t,
                                               const Mat<Scalar>& cond, const Mat<Scalar>& eps) {
  check_input(x_t, g, t);
  if (cond.rows() != config_.cond_channels || cond.cols() != g.columns()) {
    throw Error(Errc::shape_mismatch, "conditioning does not match geometry");
  }
  typename HintNet<Scalar>::Cache hc;
  typename Encoder<Scalar>::Cache cc;
  typename Decoder<Scalar>::Cache dc;
  std::vector<typename Conv2d<Scalar>::Cache> zc(zero_skips.size());
  typename Conv2d<Scalar>::Cache zmc;

  const Mat<Scalar> hint_out = hint.forward(cond, g, &hc);
  const auto cenc = control_encoder.forward(x_t, g, t, &hint_out, &cc);
  auto enc = base_encoder.forward(x_t, g, t, nullptr, nullptr);
  for (std::size_t i = 0; i < zero_skips.size(); ++i) {
    enc.skips[i] += zero_skips[i].forward(cenc.skips[i], cenc.geoms[i], &zc[i]);
  }
  enc.mid += zero_mid.forward(cenc.mid, cenc.geoms.back(), &zmc);

  const Mat<Scalar> diff = base_decoder.forward(enc, &dc) - eps;
  const Scalar n = static_cast<Scalar>(diff.size());
  const auto grads = base_decoder.backward(dc, (Scalar(2) / n) * diff, false);

  std::vector<Mat<Scalar>> d_skips(zero_skips.size());
  for (std::size_t i = 0; i < zero_skips.size(); ++i) {
    d_skips[i] = zero_skips[i].backward(zc[i], grads.skips[i], true, true);
  }
  Mat<Scalar> d_mid = zero_mid.backward(zmc, grads.mid, true, true);
  const Mat<Scalar> d_hint = control_encoder.backward(
      cc, std::move(d_skips), std::move(d_mid), Mat<Scalar>::Zero(config_.time_dim(), g.batch), true);
  hint.backward(hc, d_hint, true);
  return diff.squaredNorm() / n;
}

template <typename Scalar>
void Denoiser<Scalar>::visit_base(const Visitor& f) {
  base_encoder.visit("base.enc", f);
  base_decoder.visit("base.dec", f);
}

template <typename Scalar>
void Denoiser<Scalar>::visit_control(const Visitor& f) {
  control_encoder.visit("control.enc", f);
  hint.visit("control.hint", f);
  for (std::size_t i = 0; i < zero_skips.size(); ++i) zero_skips[i].visit("control.zero_skip" + std::to_string(i), f);
  zero_mid.visit("control.zero_mid", f);
}

template <typename Scalar>
void Denoiser<Scalar>::visit_base(const ConstVisitor& f) const {
  const_cast<Denoiser*>(this)->visit_base(Visitor([&f](const std::string& n, Param<Scalar>& p) { f(n, p); }));
}

template <typename Scalar>
void Denoiser<Scalar>::visit_control(const ConstVisitor& f) const {
  const_cast<Denoiser*>(this)->visit_control(Visitor([&f](const std::string& n, Param<Scalar>& p) { f(n, p); }));
}

template <typename Scalar>
void Denoiser<Scalar>::zero_grad() {
  const Visitor z = [](const std::string&, Param<Scalar>& p) { p.zero_grad(); };
  visit_base(z);
  visit_control(z);
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace nn
}  // namespace palettediff
