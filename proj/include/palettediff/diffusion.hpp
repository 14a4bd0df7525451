#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "palettediff/conditioning.hpp"
#include "palettediff/dataset.hpp"
#include "palettediff/unet.hpp"

namespace palettediff {

enum class ScheduleKind { linear, cosine };

std::string_view to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(std::string_view text);

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  int steps = 0;  // T
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
};

NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::linear);

/// x_t = sqrt(alpha_bar(t)) x0 + sqrt(1 - alpha_bar(t)) eps, with one t per sample.
template <typename Scalar>
nn::Mat<Scalar> q_sample(const nn::Mat<Scalar>& x0, const nn::Geometry& g, const std::vector<int>& t,
                         const nn::Mat<Scalar>& eps, const NoiseSchedule& sched);

/// Clamp to [-s, s] and rescale to [-c, c], s = max(p-quantile of |x|, c).
nn::Mat<float> dynamic_threshold(const nn::Mat<float>& x0_hat, double p, double c);

/// Linear-interpolated quantile of a sample (numpy's default rule).
double quantile(std::vector<float> values, double p);

struct TrainingMeta {
  std::string kind;  // "base" or "control"
  int steps = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  double seconds = 0.0;  // wall time of the run; not written to checkpoint files
  std::vector<double> loss_curve;  // one entry per step
  long dequant_stacks = 0;
  long inpaint_stacks = 0;
};

struct Checkpoint {
  ModelConfig config;
  NoiseSchedule schedule;
  std::optional<Variant> variant;  // set once a control encoder is trained
  nn::Denoiser<float> model;
  TrainingMeta base_meta;
  std::optional<TrainingMeta> control_meta;

  std::string base_hash() const;
  std::string control_hash() const;
  std::string tag() const;  // variant name or "base"
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_loss_csv(const TrainingMeta& meta, const std::filesystem::path& path);

struct TrainOptions {
  int steps = 1000;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  int warmup_steps = 0;       // linear ramp from 0
  bool cosine_decay = false;  // anneal to 0 at the last step
  double ema_decay = 0.0;     // > 0: the returned weights are an exponential moving average
  std::uint64_t seed = 0;
  std::function<void(int step, double loss)> progress;
};

/// Reference optimizer settings of the large-scale setup (AdamW, batch 12, lr 1e-5).
TrainOptions reference_train_options();

struct TaskMix {
  double dequant = 0.5;
  double inpaint = 0.5;
};

/// Probabilities of the texture dropout used while training control encoders.
struct TextureDropout {
  double whole_image = 0.3;
  double inside_mask = 0.5;
};

struct ExampleCounters {
  long dequant = 0;
  long inpaint = 0;
};

/// Draws one control-training conditioning stack for a ground-truth image.
ConditioningStack draw_training_stack(const RasterImage& gt, Variant variant, const TaskMix& mix,
                                      const TextureDropout& dropout, std::mt19937_64& rng,
                                      ExampleCounters* counters = nullptr);

Checkpoint train_base(const ImageSource& data, const ModelConfig& config, const NoiseSchedule& schedule,
                      const TrainOptions& options);

Checkpoint train_control(const ImageSource& data, const Checkpoint& base, Variant variant, const TaskMix& mix,
                         const TrainOptions& options, const TextureDropout& dropout = {});

/// Mean epsilon-MSE on a fixed set of (image, stack, t, eps) draws.
/// With use_control=false the base-only prediction is scored.
double held_out_loss(const Checkpoint& ckpt, const std::vector<RasterImage>& images, Variant variant,
                     const TaskMix& mix, std::uint64_t seed, bool use_control);

struct SamplerConfig {
  int steps = 27;
  double thresholding_p = 0.95;
  double thresholding_c = 1.0;
  std::uint64_t seed = 0;

  void validate(int T) const;
};

/// Respaced timesteps, ascending, evenly covering [0, T).
std::vector<int> respaced_timesteps(int T, int steps);

RasterImage sample(const Checkpoint& ckpt, const ConditioningStack& cond, const SamplerConfig& cfg);
/// Unconditional sample from the base network alone.
RasterImage sample_base(const Checkpoint& ckpt, int height, int width, const SamplerConfig& cfg);

struct DequantizeOptions {
  bool texture_on = false;
  const RasterImage* texture_src = nullptr;
  bool l_post = false;  // enforce the texture source's luminance on the output
};

RasterImage dequantize(const Checkpoint& ckpt, const IndexedImage& q, int n_colors, const DequantizeOptions& opts,
                       const SamplerConfig& cfg);

struct InpaintOptions {
  bool texture_on = true;
  bool texture_in_mask = false;
};

/// A mask with no pixels leaves the fill unused, so it may be MeanFill.
RasterImage inpaint(const Checkpoint& ckpt, const RasterImage& img, const MaskSpec& mask, const Fill& fill,
                    const InpaintOptions& opts, const SamplerConfig& cfg);

/// Images in [-1, 1], 3 x (H*W).
nn::Mat<float> to_model_range(const RasterImage& img);
RasterImage from_model_range(const nn::Mat<float>& x, int width, int height);

}  // namespace palettediff
