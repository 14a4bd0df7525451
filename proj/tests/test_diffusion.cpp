#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "gradcheck.hpp"
#include "palettediff/diffusion.hpp"
#include "palettediff/error.hpp"
#include "palettediff/metrics.hpp"
#include "support.hpp"

using namespace palettediff;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.base_channels = 8;
  cfg.channel_multipliers = {1, 2};
  return cfg;
}

Checkpoint tiny_base(int steps = 0, std::uint64_t seed = 3) {
  TrainOptions o;
  o.steps = steps;
  o.batch_size = 4;
  o.seed = seed;
  return train_base(ProceduralSource(8), tiny_config(), make_schedule(1000), o);
}

}  // namespace

TEST(Schedule, LinearEndpointsAndProducts) {
  const NoiseSchedule s = make_schedule(1000);
  EXPECT_DOUBLE_EQ(s.betas.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.betas.back(), 0.02);
  const NoiseSchedule ten = make_schedule(10);
  double prod = 1.0;
  for (int t = 0; t < 10; ++t) {
    prod *= 1.0 - ten.betas[static_cast<std::size_t>(t)];
    EXPECT_DOUBLE_EQ(ten.alpha_bars[static_cast<std::size_t>(t)], prod);
  }
  EXPECT_EQ(ten.alpha_bars[0], ten.alphas[0]);
}

TEST(Schedule, AlphaBarsStrictlyDecreasing) {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    for (int T : {1, 2, 10, 1000}) {
      const NoiseSchedule s = make_schedule(T, kind);
      for (double ab : s.alpha_bars) {
        EXPECT_GT(ab, 0.0);
        EXPECT_LT(ab, 1.0);
      }
      for (std::size_t t = 1; t < s.alpha_bars.size(); ++t) EXPECT_LT(s.alpha_bars[t], s.alpha_bars[t - 1]);
    }
  }
  try {
    make_schedule(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_t);
  }
}

TEST(QSample, ZeroNoiseAndLimits) {
  const NoiseSchedule s = make_schedule(1000);
  const nn::Geometry g{2, 2, 2};
  std::mt19937_64 rng(61);
  std::normal_distribution<double> n;
  nn::Mat<double> x0(3, 8), eps = nn::Mat<double>::Zero(3, 8);
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0.data()[i] = n(rng);
  const nn::Mat<double> xt = q_sample(x0, g, {0, 999}, eps, s);
  EXPECT_EQ(xt.leftCols(4), (std::sqrt(s.alpha_bars[0]) * x0.leftCols(4)).eval());
  EXPECT_EQ(xt.rightCols(4), (std::sqrt(s.alpha_bars[999]) * x0.rightCols(4)).eval());

  // With alpha_bar forced to 1 the noise term vanishes.
  NoiseSchedule id = make_schedule(1);
  id.alpha_bars = {1.0};
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = n(rng);
  EXPECT_EQ(q_sample(x0, g, {0, 0}, eps, id), x0);
  EXPECT_THROW(q_sample(x0, nn::Geometry{1, 2, 2}, {0}, eps, s), Error);
  EXPECT_THROW(q_sample(x0, g, {0, 1000}, eps, s), Error);
}

TEST(QSample, MonteCarloVariance) {
  const NoiseSchedule s = make_schedule(1000);
  constexpr int draws = 100000;
  const nn::Geometry g{1, 1, draws};
  std::mt19937_64 rng(62);
  std::normal_distribution<double> n;
  for (int t : {0, 100, 500, 999}) {
    nn::Mat<double> eps(1, draws);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = n(rng);
    const nn::Mat<double> xt = q_sample<double>(nn::Mat<double>::Zero(1, draws), g, {t}, eps, s);
    const double mean = xt.mean();
    const double var = (xt.array() - mean).square().sum() / (draws - 1);
    const double expect = 1.0 - s.alpha_bars[static_cast<std::size_t>(t)];
    EXPECT_NEAR(var / expect, 1.0, 0.02) << t;
  }
}

TEST(DynamicThreshold, ConstructedCase) {
  nn::Mat<float> x(1, 20);
  for (int i = 0; i < 18; ++i) x(0, i) = static_cast<float>((i - 9) * 0.1);
  x(0, 18) = 2.0f;
  x(0, 19) = 5.0f;
  // Sorted |x| ends ..., 0.9, 2.0, 5.0; position 0.95 * 19 = 18.05.
  const double s = 2.0 + 0.05 * 3.0;
  const nn::Mat<float> out = dynamic_threshold(x, 0.95, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double expect = std::clamp<double>(x(0, i), -s, s) / s;
    EXPECT_NEAR(out(0, i), expect, 1e-6);
  }
  EXPECT_NEAR(quantile({0.1f, 0.9f, 0.2f, 2.0f, 5.0f}, 0.5), 0.9, 1e-7);
}

TEST(DynamicThreshold, BoundAndIdentityProperties) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> pu(0.05, 1.0), cu(0.2, 3.0);
  std::normal_distribution<float> n(0.0f, 2.0f);
  for (int trial = 0; trial < 500; ++trial) {
    const double p = pu(rng), c = cu(rng);
    nn::Mat<float> x(3, 33);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    const nn::Mat<float> out = dynamic_threshold(x, p, c);
    EXPECT_LE(out.cwiseAbs().maxCoeff(), static_cast<float>(c));

    const nn::Mat<float> inside = (x.array() / (x.cwiseAbs().maxCoeff() + 1.0f) * static_cast<float>(c)).matrix();
    EXPECT_EQ(dynamic_threshold(inside, p, c), inside);
  }
  nn::Mat<float> big(1, 4);
  big << 0.5f, -1.0f, 2.0f, -4.0f;
  EXPECT_TRUE(dynamic_threshold(big, 1.0, 1.0).isApprox((big / 4.0f).eval()));
  EXPECT_THROW(dynamic_threshold(big, 0.0, 1.0), Error);
}

TEST(Respacing, EvenlyCoversRange) {
  EXPECT_EQ(respaced_timesteps(1000, 1), (std::vector<int>{999}));
  const auto ts = respaced_timesteps(1000, 27);
  ASSERT_EQ(ts.size(), 27u);
  EXPECT_EQ(ts.front(), 0);
  EXPECT_EQ(ts.back(), 999);
  for (std::size_t k = 1; k < ts.size(); ++k) EXPECT_GT(ts[k], ts[k - 1]);
  const auto all = respaced_timesteps(10, 10);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(all[static_cast<std::size_t>(k)], k);
  EXPECT_THROW(respaced_timesteps(10, 11), Error);
}

TEST(GradientCheck, BaseNetwork) {
  const auto r = test::gradient_check(false, 71);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_tensor;
}

TEST(GradientCheck, ControlBranch) {
  const auto r = test::gradient_check(true, 72);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_tensor;
}

TEST(ZeroInit, PredictionIgnoresConditioning) {
  const Checkpoint ck = tiny_base(5);
  std::mt19937_64 rng(64);
  const nn::Geometry g{1, 8, 8};
  std::normal_distribution<float> n;
  nn::Mat<float> x(3, 64);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const nn::Mat<float> base = ck.model.predict_eps(x, g, {300}, nullptr);
  for (int trial = 0; trial < 5; ++trial) {
    const nn::Mat<float> cond = test::random_stack(rng, 8).data;
    EXPECT_EQ(ck.model.predict_eps(x, g, {300}, &cond), base);
  }
}

TEST(ZeroInit, SamplingIgnoresConditioning) {
  const Checkpoint ck = tiny_base(5);
  std::mt19937_64 rng(65);
  SamplerConfig sc;
  sc.steps = 6;
  sc.seed = 9;
  const RasterImage first = sample(ck, test::random_stack(rng, 8), sc);
  for (int trial = 0; trial < 3; ++trial) EXPECT_EQ(sample(ck, test::random_stack(rng, 8), sc), first);
  EXPECT_EQ(sample_base(ck, 8, 8, sc), first);
}

TEST(Sampler, DeterministicAndSingleStep) {
  const Checkpoint ck = tiny_base(20);
  std::mt19937_64 rng(66);
  const ConditioningStack cond = test::random_stack(rng, 8);
  SamplerConfig sc;
  sc.steps = 4;
  sc.seed = 1;
  EXPECT_EQ(sample(ck, cond, sc), sample(ck, cond, sc));

  // One step: the thresholded x0 estimate from the initial noise.
  sc.steps = 1;
  std::mt19937_64 noise(sc.seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  nn::Mat<float> x(3, 64);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(noise);
  const nn::Mat<float> c = cond.data;
  const nn::Mat<float> eps = ck.model.predict_eps(x, nn::Geometry{1, 8, 8}, {999}, &c);
  const double ab = ck.schedule.alpha_bars[999];
  const nn::Mat<float> x0 =
      ((x - static_cast<float>(std::sqrt(1.0 - ab)) * eps) / static_cast<float>(std::sqrt(ab))).eval();
  EXPECT_EQ(sample(ck, cond, sc), from_model_range(dynamic_threshold(x0, 0.95, 1.0), 8, 8));
  sc.steps = 0;
  EXPECT_THROW(sample(ck, cond, sc), Error);
}

TEST(TrainBase, LearnsOneImage) {
  const RasterImage img = procedural_image(5, 8);
  TrainOptions o;
  o.steps = 500;
  o.batch_size = 4;
  o.learning_rate = 1e-3;
  o.seed = 4;
  const Checkpoint ck = train_base(ListSource({img}), tiny_config(), make_schedule(1000), o);
  const auto& curve = ck.base_meta.loss_curve;
  ASSERT_EQ(curve.size(), 500u);
  double tail = 0;
  for (std::size_t i = 450; i < 500; ++i) tail += curve[i];
  EXPECT_LT(tail / 50, 0.5 * curve.front());
}

TEST(TrainBase, SeededAndZeroSteps) {
  EXPECT_EQ(tiny_base(3, 8).base_hash(), tiny_base(3, 8).base_hash());
  EXPECT_NE(tiny_base(3, 8).base_hash(), tiny_base(3, 9).base_hash());
  Checkpoint init{tiny_config(), make_schedule(1000), std::nullopt, nn::Denoiser<float>(tiny_config(), 8), {}, {}};
  EXPECT_EQ(tiny_base(0, 8).base_hash(), init.base_hash());
  try {
    TrainOptions o;
    train_base(ListSource({}), tiny_config(), make_schedule(1000), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_dataset);
  }
}

TEST(TrainBase, LearningRateScheduleAndAveraging) {
  auto run = [](int steps, auto&& tweak) {
    TrainOptions o;
    o.steps = steps;
    o.batch_size = 2;
    o.learning_rate = 1e-2;
    o.seed = 8;
    tweak(o);
    return train_base(ProceduralSource(8), tiny_config(), make_schedule(1000), o);
  };
  const auto plain = [](TrainOptions&) {};
  // Both schedules give factor 1 at step 0.
  EXPECT_EQ(run(1, [](TrainOptions& o) { o.cosine_decay = true; }).base_hash(), run(1, plain).base_hash());
  EXPECT_EQ(run(1, [](TrainOptions& o) { o.warmup_steps = 1; }).base_hash(), run(1, plain).base_hash());
  EXPECT_NE(run(3, [](TrainOptions& o) { o.cosine_decay = true; }).base_hash(), run(3, plain).base_hash());
  EXPECT_NE(run(3, [](TrainOptions& o) { o.warmup_steps = 3; }).base_hash(), run(3, plain).base_hash());

  // One averaged step: the warm-started decay is 1/10, so the result is
  // 0.1 * init + 0.9 * (one plain step).
  const Checkpoint init = run(0, plain), one = run(1, plain);
  const Checkpoint avg = run(1, [](TrainOptions& o) { o.ema_decay = 0.999; });
  std::vector<nn::Mat<float>> a, b, c;
  auto grab = [](std::vector<nn::Mat<float>>& out) {
    return [&out](const std::string&, const nn::Param<float>& p) { out.push_back(p.value); };
  };
  init.model.visit_base(nn::Denoiser<float>::ConstVisitor(grab(a)));
  one.model.visit_base(nn::Denoiser<float>::ConstVisitor(grab(b)));
  avg.model.visit_base(nn::Denoiser<float>::ConstVisitor(grab(c)));
  ASSERT_EQ(a.size(), c.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, static_cast<double>((0.1f * a[i] + 0.9f * b[i] - c[i]).cwiseAbs().maxCoeff()));
  EXPECT_LT(worst, 1e-6);
  EXPECT_NE(avg.base_hash(), one.base_hash());
  EXPECT_EQ(avg.base_hash(), run(1, [](TrainOptions& o) { o.ema_decay = 0.999; }).base_hash());
}

TEST(TrainControl, AveragedEncoderKeepsBaseFrozen) {
  const Checkpoint base = tiny_base(4);
  TrainOptions o;
  o.steps = 3;
  o.batch_size = 2;
  o.learning_rate = 1e-2;
  o.cosine_decay = true;
  o.warmup_steps = 2;
  o.ema_decay = 0.9;
  const Checkpoint ck = train_control(ProceduralSource(8), base, Variant::G, TaskMix{}, o);
  EXPECT_EQ(ck.base_hash(), base.base_hash());
  EXPECT_NE(ck.control_hash(), base.control_hash());
}

TEST(TrainControl, BaseStaysFrozenAndConditioningMatters) {
  const Checkpoint base = tiny_base(10);
  TrainOptions o;
  o.steps = 3;
  o.batch_size = 2;
  o.learning_rate = 1e-2;
  o.seed = 5;
  const ListSource two({procedural_image(1, 8), procedural_image(2, 8)});
  const Checkpoint ck = train_control(two, base, Variant::T, TaskMix{}, o);
  EXPECT_EQ(ck.base_hash(), base.base_hash());
  EXPECT_NE(ck.control_hash(), base.control_hash());
  EXPECT_EQ(ck.variant, Variant::T);

  std::mt19937_64 rng(67);
  std::normal_distribution<float> n;
  nn::Mat<float> x(3, 64);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const nn::Mat<float> c1 = test::random_stack(rng, 8).data, c2 = test::random_stack(rng, 8).data;
  const nn::Geometry g{1, 8, 8};
  EXPECT_NE(ck.model.predict_eps(x, g, {400}, &c1), ck.model.predict_eps(x, g, {400}, &c2));
}

TEST(TrainControl, TaskMixCounters) {
  const Checkpoint base = tiny_base(0);
  TrainOptions o;
  o.steps = 4;
  o.batch_size = 3;
  const Checkpoint d = train_control(ProceduralSource(8), base, Variant::L, TaskMix{1.0, 0.0}, o);
  EXPECT_EQ(d.control_meta->inpaint_stacks, 0);
  EXPECT_EQ(d.control_meta->dequant_stacks, 12);
  const Checkpoint i = train_control(ProceduralSource(8), base, Variant::L, TaskMix{0.0, 1.0}, o);
  EXPECT_EQ(i.control_meta->dequant_stacks, 0);
  try {
    train_control(ListSource({}), base, Variant::L, TaskMix{}, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_dataset);
  }
}

TEST(DrawTrainingStack, DropoutRates) {
  std::mt19937_64 rng(68);
  const RasterImage img = procedural_image(3, 16);
  int off = 0;
  constexpr int n = 2000;
  for (int k = 0; k < n; ++k) {
    const ConditioningStack s = draw_training_stack(img, Variant::T, TaskMix{1.0, 0.0}, TextureDropout{}, rng);
    if (s.data.row(channel::texture_indicator).isZero()) ++off;
  }
  EXPECT_NEAR(off / double(n), 0.3, 0.04);
}

TEST(CheckpointFile, RoundTrip) {
  const Checkpoint base = tiny_base(3);
  TrainOptions o;
  o.steps = 2;
  o.batch_size = 2;
  const Checkpoint ck = train_control(ProceduralSource(8), base, Variant::G, TaskMix{}, o);
  const auto dir = test::scratch_dir("ckpt");
  save_checkpoint(ck, dir / "g.ckpt");
  const Checkpoint back = load_checkpoint(dir / "g.ckpt");
  EXPECT_EQ(back.base_hash(), ck.base_hash());
  EXPECT_EQ(back.control_hash(), ck.control_hash());
  EXPECT_EQ(back.variant, Variant::G);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.control_meta->loss_curve, ck.control_meta->loss_curve);
  std::mt19937_64 rng(69);
  SamplerConfig sc;
  sc.steps = 3;
  const ConditioningStack cond = test::random_stack(rng, 8);
  EXPECT_EQ(sample(back, cond, sc), sample(ck, cond, sc));

  write_loss_csv(*ck.control_meta, dir / "loss.csv");
  std::ifstream csv(dir / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,loss");
}

TEST(CheckpointFile, Errors) {
  try {
    load_checkpoint("/nonexistent/x.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_checkpoint);
  }
  const auto dir = test::scratch_dir("ckpt_bad");
  {
    std::ofstream f(dir / "bad.ckpt", std::ios::binary);
    f << "not a checkpoint at all";
  }
  try {
    load_checkpoint(dir / "bad.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_checkpoint);
  }
}

TEST(Dequantize, LuminancePostProcess) {
  const Checkpoint ck = tiny_base(5);
  const RasterImage img = procedural_image(11, 8);
  const IndexedImage q = median_cut(img, 8);
  SamplerConfig sc;
  sc.steps = 3;
  DequantizeOptions opts;
  opts.texture_src = &img;
  opts.l_post = true;
  const RasterImage out = dequantize(ck, q, 8, opts, sc);
  EXPECT_EQ(out.width(), 8);
  EXPECT_EQ(out.height(), 8);
  EXPECT_LE((luminance(out) - luminance(img)).abs().maxCoeff(), 1.5);
  opts.texture_src = nullptr;
  try {
    dequantize(ck, q, 8, opts, sc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_texture);
  }
}

TEST(Dequantize, OutputShapeForMultiplesOfDownsampling) {
  const Checkpoint ck = tiny_base(0);
  SamplerConfig sc;
  sc.steps = 2;
  for (auto [w, h] : {std::pair{8, 8}, std::pair{6, 4}, std::pair{16, 2}}) {
    std::mt19937_64 rng(70);
    const IndexedImage q = median_cut(test::random_image(rng, w, h), 4);
    const RasterImage out = dequantize(ck, q, 4, DequantizeOptions{}, sc);
    EXPECT_EQ(out.width(), w);
    EXPECT_EQ(out.height(), h);
  }
}
