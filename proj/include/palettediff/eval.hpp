#pragma once

// Scripted experiments over a held-out corpus. Every experiment takes
// already-loaded checkpoints and returns per-image values plus aggregates.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "palettediff/diffusion.hpp"
#include "palettediff/metrics.hpp"
#include "palettediff/transfer.hpp"

namespace palettediff {

struct ExperimentConfig {
  std::optional<std::filesystem::path> corpus_dir;  // PNG folder; procedural corpus otherwise
  std::uint64_t corpus_seed = 2024;
  int n = 512;
  int image_size = 32;
  std::vector<int> palette_sizes{4, 8, 16, 32};
  std::vector<Variant> variants{Variant::L, Variant::G, Variant::T};
  std::map<std::string, std::filesystem::path> checkpoints;  // tag -> file
  SamplerConfig sampler;
  std::filesystem::path output_dir = "eval_out";
  int workers = 1;
  int contact_sheet_rows = 8;

  void validate() const;
};

struct ResultRow {
  std::string experiment;
  std::string variant;  // variant tag, "L-post" or "identity"
  int palette_size = 0;
  bool texture = false;
  std::string metric;
  double mean = 0.0;
  double standard_error = 0.0;
  int n = 0;
};

struct ImageValue {
  std::string variant;
  int palette_size = 0;
  bool texture = false;
  std::string metric;
  int image = 0;
  double value = 0.0;
};

struct ResultTable {
  std::string experiment;
  std::vector<ResultRow> rows;
  std::vector<ImageValue> per_image;
  std::vector<std::vector<RasterImage>> contact_sheet;  // one row of tiles per image
  std::map<std::string, double> diagnostics;

  /// Throws invalid_argument when no such cell exists.
  const ResultRow& at(std::string_view variant, int palette_size, bool texture, std::string_view metric) const;
};

/// Loaded checkpoints keyed by tag (variant name).
using CheckpointSet = std::map<std::string, const Checkpoint*>;

std::vector<RasterImage> load_corpus(const ExperimentConfig& cfg);

/// Sampler seed for one (image, palette size) cell; shared by all experiments
/// so that equal conditioning implies equal samples.
std::uint64_t cell_seed(const SamplerConfig& base, int image, int palette_size);

/// Texture-off dequantization scored against ground truth. With
/// `identity_baseline`, rows for output = quantized input are added.
ResultTable eval_dequant(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                         const CheckpointSet& ckpts, bool identity_baseline = true);

/// Texture on and off for each configured variant plus L-post, with
/// ground-truth and palette-error metrics.
ResultTable eval_texture_variants(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                                  const CheckpointSet& ckpts);

/// Palette transfer from a random donor image of the same palette size.
ResultTable eval_palette_transfer(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                                  const CheckpointSet& ckpts, TransferMode mode);

enum class FillMode { mean, random };
std::string_view to_string(FillMode m);
FillMode parse_fill_mode(std::string_view text);

ResultTable eval_inpaint(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                         const CheckpointSet& ckpts, FillMode fill);

/// HSV-augmentation sweep on the T checkpoint. The strength is carried in the
/// metric name, e.g. "ssim@s=0.25".
ResultTable eval_augmentation(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                              const CheckpointSet& ckpts, const std::vector<double>& strengths);

/// <dir>/<id>_per_image.csv, <id>_summary.csv, <id>_sheet.png and <id>_manifest.json.
void write_results(const ResultTable& table, const ExperimentConfig& cfg,
                   const std::map<std::string, std::string>& checkpoint_hashes);

/// Recomputes summary rows from per-image values.
std::vector<ResultRow> summarize(const std::string& experiment, const std::vector<ImageValue>& values);

}  // namespace palettediff
