#include "palettediff/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "palettediff/error.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

using nn::Geometry;
using nn::Mat;

std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "linear") return ScheduleKind::linear;
  if (text == "cosine") return ScheduleKind::cosine;
  throw Error(Errc::invalid_argument, "schedule must be linear or cosine");
}

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
  if (T < 1) throw Error(Errc::invalid_t, "T must be at least 1");
  NoiseSchedule s;
  s.kind = kind;
  s.steps = T;
  s.betas.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    for (int t = 0; t < T; ++t) {
      s.betas[static_cast<std::size_t>(t)] = T == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * t / (T - 1);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double v = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return v * v;
    };
    for (int t = 0; t < T; ++t) {
      s.betas[static_cast<std::size_t>(t)] = std::clamp(1.0 - f(t + 1) / f(t), 1e-8, 0.999);
    }
  }
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double prod = 1.0;
  for (std::size_t t = 0; t < s.betas.size(); ++t) {
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

template <typename Scalar>
Mat<Scalar> q_sample(const Mat<Scalar>& x0, const Geometry& g, const std::vector<int>& t, const Mat<Scalar>& eps,
                     const NoiseSchedule& sched) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols() || x0.cols() != g.columns()) {
    throw Error(Errc::shape_mismatch, "x0, eps and geometry disagree");
  }
  if (static_cast<int>(t.size()) != g.batch) throw Error(Errc::shape_mismatch, "one timestep per sample required");
  Mat<Scalar> out(x0.rows(), x0.cols());
  const int p = g.pixels();
  for (int b = 0; b < g.batch; ++b) {
    const int tb = t[static_cast<std::size_t>(b)];
    if (tb < 0 || tb >= sched.steps) throw Error(Errc::invalid_t, "timestep out of range");
    const double ab = sched.alpha_bars[static_cast<std::size_t>(tb)];
    const auto cols = static_cast<Eigen::Index>(b) * p;
    out.middleCols(cols, p) = static_cast<Scalar>(std::sqrt(ab)) * x0.middleCols(cols, p) +
                              static_cast<Scalar>(std::sqrt(1.0 - ab)) * eps.middleCols(cols, p);
  }
  return out;
}

template Mat<float> q_sample(const Mat<float>&, const Geometry&, const std::vector<int>&, const Mat<float>&,
                             const NoiseSchedule&);
template Mat<double> q_sample(const Mat<double>&, const Geometry&, const std::vector<int>&, const Mat<double>&,
                              const NoiseSchedule&);

double quantile(std::vector<float> values, double p) {
  if (values.empty()) throw Error(Errc::empty, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (static_cast<double>(values[hi]) - values[lo]) * frac;
}

Mat<float> dynamic_threshold(const Mat<float>& x0_hat, double p, double c) {
  if (!(p > 0.0 && p <= 1.0) || !(c > 0.0)) {
    throw Error(Errc::invalid_argument, "dynamic thresholding needs 0 < p <= 1 and c > 0");
  }
  std::vector<float> mags(static_cast<std::size_t>(x0_hat.size()));
  for (Eigen::Index i = 0; i < x0_hat.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(x0_hat.data()[i]);
  const double s = std::max(quantile(std::move(mags), p), c);
  const auto sf = static_cast<float>(s);
  if (s == c) return x0_hat.cwiseMax(-sf).cwiseMin(sf);
  // The float rescale can overshoot c by an ulp.
  const auto cf = static_cast<float>(c);
  return (x0_hat.cwiseMax(-sf).cwiseMin(sf).array() * static_cast<float>(c / s)).cwiseMax(-cf).cwiseMin(cf).matrix();
}

Mat<float> to_model_range(const RasterImage& img) { return (img.to_unit().array() * 2.0f - 1.0f).matrix(); }

RasterImage from_model_range(const Mat<float>& x, int width, int height) {
  RasterImage img(width, height);
  for (int i = 0; i < width * height; ++i) {
    img.set(i, {to_channel((x(0, i) + 1.0) * 127.5), to_channel((x(1, i) + 1.0) * 127.5),
                to_channel((x(2, i) + 1.0) * 127.5)});
  }
  return img;
}

namespace {

class AdamW {
 public:
  AdamW(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}
  void set_learning_rate(double lr) { lr_ = lr; }

  void step(const std::vector<nn::Param<float>*>& params) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    const auto step_size = static_cast<float>(lr_ / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      m_[i] = static_cast<float>(b1_) * m_[i] + static_cast<float>(1.0 - b1_) * p.grad;
      v_[i] = static_cast<float>(b2_) * v_[i] + static_cast<float>(1.0 - b2_) * p.grad.cwiseAbs2();
      if (wd_ > 0.0) p.value *= static_cast<float>(1.0 - lr_ * wd_);
      p.value.array() -=
          step_size * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + static_cast<float>(eps_));
    }
  }

 private:
  double lr_, wd_;
  double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::vector<Mat<float>> m_, v_;
};

void clip_gradients(const std::vector<nn::Param<float>*>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto* p : params) p->grad *= scale;
  }
}

double scheduled_lr(const TrainOptions& o, int step) {
  double lr = o.learning_rate;
  if (step < o.warmup_steps) lr *= static_cast<double>(step + 1) / o.warmup_steps;
  if (o.cosine_decay && o.steps > 1) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * step / (o.steps - 1)));
  return lr;
}

// Warm-started average: early steps use a shorter horizon so the average is
// not dominated by the initialization.
class Ema {
 public:
  Ema(const std::vector<nn::Param<float>*>& params, double decay) : decay_(decay) {
    if (decay_ > 0.0)
      for (const auto* p : params) shadow_.push_back(p->value);
  }
  void update(const std::vector<nn::Param<float>*>& params, int step) {
    if (decay_ <= 0.0) return;
    const auto d = static_cast<float>(std::min(decay_, (1.0 + step) / (10.0 + step)));
    for (std::size_t i = 0; i < params.size(); ++i) shadow_[i] = d * shadow_[i] + (1.0f - d) * params[i]->value;
  }
  void apply(const std::vector<nn::Param<float>*>& params) const {
    if (decay_ <= 0.0) return;
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = shadow_[i];
  }

 private:
  double decay_;
  std::vector<Mat<float>> shadow_;
};

std::vector<nn::Param<float>*> collect(nn::Denoiser<float>& model, bool control) {
  std::vector<nn::Param<float>*> out;
  const nn::Denoiser<float>::Visitor f = [&out](const std::string&, nn::Param<float>& p) { out.push_back(&p); };
  if (control) {
    model.visit_control(f);
  } else {
    model.visit_base(f);
  }
  return out;
}

Mat<float> gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Mat<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<int> draw_timesteps(int batch, int T, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, T - 1);
  std::vector<int> t(static_cast<std::size_t>(batch));
  for (int& v : t) v = u(rng);
  return t;
}

void check_source(const ImageSource& data, const ModelConfig& cfg) {
  if (data.empty()) throw Error(Errc::empty_dataset, "training data is empty");
  if (data.image_size() != cfg.image_size) {
    throw Error(Errc::shape_mismatch, "training images must match the model image size");
  }
}

}  // namespace

TrainOptions reference_train_options() {
  TrainOptions o;
  o.batch_size = 12;
  o.learning_rate = 1e-5;
  o.weight_decay = 0.01;
  return o;
}

ConditioningStack draw_training_stack(const RasterImage& gt, Variant variant, const TaskMix& mix,
                                      const TextureDropout& dropout, std::mt19937_64& rng,
                                      ExampleCounters* counters) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double total = mix.dequant + mix.inpaint;
  if (!(total > 0.0)) throw Error(Errc::invalid_argument, "task mix must have positive mass");
  const bool inpaint = unit(rng) * total >= mix.dequant;
  const bool texture_on = unit(rng) >= dropout.whole_image;
  if (inpaint) {
    if (counters) ++counters->inpaint;
    const bool texture_in_mask = unit(rng) >= dropout.inside_mask;
    const MaskSpec mask = random_mask(gt.height(), gt.width(), rng());
    return build_inpaint_stack(gt, mask, MeanFill{}, variant, texture_in_mask, texture_on);
  }
  if (counters) ++counters->dequant;
  const std::vector<int> sizes = PaletteSpec::all();
  std::uniform_int_distribution<std::size_t> pick(0, sizes.size() - 1);
  const int n = sizes[pick(rng)];
  return build_dequant_stack_n(median_cut(gt, n), n, variant, &gt, texture_on);
}

Checkpoint train_base(const ImageSource& data, const ModelConfig& config, const NoiseSchedule& schedule,
                      const TrainOptions& options) {
  config.validate();
  check_source(data, config);
  const auto start = std::chrono::steady_clock::now();
  Checkpoint ck{config, schedule, std::nullopt, nn::Denoiser<float>(config, options.seed), {}, std::nullopt};
  ck.base_meta.kind = "base";
  ck.base_meta.batch_size = options.batch_size;
  ck.base_meta.learning_rate = options.learning_rate;
  ck.base_meta.seed = options.seed;

  const auto params = collect(ck.model, false);
  AdamW opt(options.learning_rate, options.weight_decay);
  Ema ema(params, options.ema_decay);
  std::mt19937_64 rng(derive_seed(options.seed, {1}));
  const Geometry g{options.batch_size, config.image_size, config.image_size};
  for (int step = 0; step < options.steps; ++step) {
    Mat<float> x0(3, g.columns());
    for (int b = 0; b < g.batch; ++b) {
      x0.middleCols(static_cast<Eigen::Index>(b) * g.pixels(), g.pixels()) = to_model_range(data.draw(rng));
    }
    const std::vector<int> t = draw_timesteps(g.batch, schedule.steps, rng);
    const Mat<float> eps = gaussian(3, g.columns(), rng);
    const Mat<float> x_t = q_sample(x0, g, t, eps, schedule);
    for (auto* p : params) p->zero_grad();
    const float loss = ck.model.base_loss_and_grad(x_t, g, t, eps);
    clip_gradients(params, options.grad_clip);
    opt.set_learning_rate(scheduled_lr(options, step));
    opt.step(params);
    ema.update(params, step);
    ck.base_meta.loss_curve.push_back(loss);
    if (options.progress) options.progress(step, loss);
  }
  ema.apply(params);
  ck.base_meta.steps = options.steps;
  // The control branch mirrors the trained base until a control encoder is trained.
  ck.model.reset_control(derive_seed(options.seed, {2}));
  ck.base_meta.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return ck;
}

Checkpoint train_control(const ImageSource& data, const Checkpoint& base, Variant variant, const TaskMix& mix,
                         const TrainOptions& options, const TextureDropout& dropout) {
  check_source(data, base.config);
  const auto start = std::chrono::steady_clock::now();
  Checkpoint ck = base;
  ck.variant = variant;
  ck.model.reset_control(derive_seed(options.seed, {3}));
  const std::string frozen = ck.base_hash();
  TrainingMeta meta;
  meta.kind = "control";
  meta.batch_size = options.batch_size;
  meta.learning_rate = options.learning_rate;
  meta.seed = options.seed;

  const auto params = collect(ck.model, true);
  AdamW opt(options.learning_rate, options.weight_decay);
  Ema ema(params, options.ema_decay);
  std::mt19937_64 rng(derive_seed(options.seed, {4}));
  const Geometry g{options.batch_size, base.config.image_size, base.config.image_size};
  ExampleCounters counters;
  for (int step = 0; step < options.steps; ++step) {
    Mat<float> x0(3, g.columns());
    Mat<float> cond(channel::count, g.columns());
    for (int b = 0; b < g.batch; ++b) {
      const RasterImage gt = data.draw(rng);
      const auto cols = static_cast<Eigen::Index>(b) * g.pixels();
      x0.middleCols(cols, g.pixels()) = to_model_range(gt);
      cond.middleCols(cols, g.pixels()) = draw_training_stack(gt, variant, mix, dropout, rng, &counters).data;
    }
    const std::vector<int> t = draw_timesteps(g.batch, base.schedule.steps, rng);
    const Mat<float> eps = gaussian(3, g.columns(), rng);
    const Mat<float> x_t = q_sample(x0, g, t, eps, base.schedule);
    for (auto* p : params) p->zero_grad();
    const float loss = ck.model.control_loss_and_grad(x_t, g, t, cond, eps);
    clip_gradients(params, options.grad_clip);
    opt.set_learning_rate(scheduled_lr(options, step));
    opt.step(params);
    ema.update(params, step);
    meta.loss_curve.push_back(loss);
    if (options.progress) options.progress(step, loss);
  }
  ema.apply(params);
  if (ck.base_hash() != frozen) throw Error(Errc::frozen_violation, "base parameters changed during control training");
  meta.steps = options.steps;
  meta.dequant_stacks = counters.dequant;
  meta.inpaint_stacks = counters.inpaint;
  meta.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ck.control_meta = std::move(meta);
  return ck;
}

double held_out_loss(const Checkpoint& ckpt, const std::vector<RasterImage>& images, Variant variant,
                     const TaskMix& mix, std::uint64_t seed, bool use_control) {
  if (images.empty()) throw Error(Errc::empty_dataset, "held-out set is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, {i}));
    const RasterImage& gt = images[i];
    const Geometry g{1, gt.height(), gt.width()};
    const ConditioningStack stack = draw_training_stack(gt, variant, mix, TextureDropout{}, rng);
    const std::vector<int> t = draw_timesteps(1, ckpt.schedule.steps, rng);
    const Mat<float> eps = gaussian(3, g.columns(), rng);
    const Mat<float> x_t = q_sample(to_model_range(gt), g, t, eps, ckpt.schedule);
    const Mat<float> cond = stack.data;
    const Mat<float> pred = ckpt.model.predict_eps(x_t, g, t, use_control ? &cond : nullptr);
    total += static_cast<double>((pred - eps).squaredNorm()) / static_cast<double>(eps.size());
  }
  return total / static_cast<double>(images.size());
}

void SamplerConfig::validate(int T) const {
  if (steps < 1 || steps > T) throw Error(Errc::invalid_argument, "sampler steps must lie in [1, T]");
  if (!(thresholding_p > 0.0 && thresholding_p <= 1.0)) {
    throw Error(Errc::invalid_argument, "thresholding p must lie in (0, 1]");
  }
  if (!(thresholding_c > 0.0)) throw Error(Errc::invalid_argument, "thresholding c must be positive");
}

std::vector<int> respaced_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw Error(Errc::invalid_argument, "sampler steps must lie in [1, T]");
  if (steps == 1) return {T - 1};
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    ts[static_cast<std::size_t>(k)] =
        static_cast<int>(std::lround(static_cast<double>(k) * (T - 1) / static_cast<double>(steps - 1)));
  }
  return ts;
}

namespace {

RasterImage run_sampler(const Checkpoint& ckpt, const Mat<float>* cond, int height, int width,
                        const SamplerConfig& cfg) {
  cfg.validate(ckpt.schedule.steps);
  const Geometry g{1, height, width};
  std::mt19937_64 rng(cfg.seed);
  Mat<float> x = gaussian(3, g.columns(), rng);
  const std::vector<int> ts = respaced_timesteps(ckpt.schedule.steps, cfg.steps);
  const auto& ab = ckpt.schedule.alpha_bars;
  for (int k = cfg.steps - 1; k >= 0; --k) {
    const int t = ts[static_cast<std::size_t>(k)];
    const Mat<float> eps = ckpt.model.predict_eps(x, g, {t}, cond);
    const double a = ab[static_cast<std::size_t>(t)];
    Mat<float> x0 = ((x - static_cast<float>(std::sqrt(1.0 - a)) * eps) / static_cast<float>(std::sqrt(a))).eval();
    x0 = dynamic_threshold(x0, cfg.thresholding_p, cfg.thresholding_c);
    if (k == 0) {
      x = std::move(x0);
      break;
    }
    const double a_prev = ab[static_cast<std::size_t>(ts[static_cast<std::size_t>(k - 1)])];
    const double beta = 1.0 - a / a_prev;
    const auto c0 = static_cast<float>(std::sqrt(a_prev) * beta / (1.0 - a));
    const auto c1 = static_cast<float>(std::sqrt(1.0 - beta) * (1.0 - a_prev) / (1.0 - a));
    const auto sd = static_cast<float>(std::sqrt(beta * (1.0 - a_prev) / (1.0 - a)));
    x = c0 * x0 + c1 * x + sd * gaussian(3, g.columns(), rng);
  }
  return from_model_range(x, width, height);
}

}  // namespace

RasterImage sample(const Checkpoint& ckpt, const ConditioningStack& cond, const SamplerConfig& cfg) {
  if (cond.data.cols() != static_cast<Eigen::Index>(cond.width) * cond.height || cond.width < 1) {
    throw Error(Errc::shape_mismatch, "conditioning stack is malformed");
  }
  const Mat<float> c = cond.data;
  return run_sampler(ckpt, &c, cond.height, cond.width, cfg);
}

RasterImage sample_base(const Checkpoint& ckpt, int height, int width, const SamplerConfig& cfg) {
  return run_sampler(ckpt, nullptr, height, width, cfg);
}

RasterImage dequantize(const Checkpoint& ckpt, const IndexedImage& q, int n_colors, const DequantizeOptions& opts,
                       const SamplerConfig& cfg) {
  if (opts.l_post && opts.texture_src == nullptr) {
    throw Error(Errc::missing_texture, "luminance post-process needs a texture source");
  }
  const Variant variant = ckpt.variant.value_or(Variant::noTex);
  const ConditioningStack stack = build_dequant_stack_n(q, n_colors, variant, opts.texture_src, opts.texture_on);
  RasterImage out = sample(ckpt, stack, cfg);
  if (opts.l_post) {
    if (opts.texture_src->width() != q.width() || opts.texture_src->height() != q.height()) {
      throw Error(Errc::dimension_mismatch, "texture source does not match the quantized image");
    }
    out = replace_luminance(out, luminance(*opts.texture_src));
  }
  return out;
}

RasterImage inpaint(const Checkpoint& ckpt, const RasterImage& img, const MaskSpec& mask, const Fill& fill,
                    const InpaintOptions& opts, const SamplerConfig& cfg) {
  validate_mask(mask);
  const Fill used = mask.coverage() == 0.0 ? Fill{Rgb{0, 0, 0}} : fill;
  const Variant variant = ckpt.variant.value_or(Variant::noTex);
  return sample(ckpt, build_inpaint_stack(img, mask, used, variant, opts.texture_in_mask, opts.texture_on), cfg);
}

}  // namespace palettediff
