#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "palettediff/error.hpp"
#include "palettediff/eval.hpp"
#include "palettediff/util.hpp"
#include "support.hpp"
#include "tiny_models.hpp"

using namespace palettediff;

namespace {

class EvalTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { models_ = new std::map<std::string, Checkpoint>(test::tiny_checkpoints(16)); }
  static void TearDownTestSuite() {
    delete models_;
    models_ = nullptr;
  }

  static ExperimentConfig config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.n = 6;
    cfg.image_size = 16;
    cfg.corpus_seed = 77;
    cfg.palette_sizes = {4, 8};
    cfg.sampler.steps = 3;
    cfg.sampler.seed = 11;
    cfg.output_dir = test::scratch_dir("eval_" + name);
    return cfg;
  }

  static CheckpointSet all() {
    CheckpointSet s;
    for (const auto& [k, v] : *models_) s[k] = &v;
    return s;
  }

  static std::vector<RasterImage> corpus(const ExperimentConfig& cfg) { return load_corpus(cfg); }

  static std::map<std::string, Checkpoint>* models_;
};

std::map<std::string, Checkpoint>* EvalTest::models_ = nullptr;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void expect_no_nan(const ResultTable& t) {
  for (const auto& r : t.rows) {
    EXPECT_FALSE(std::isnan(r.mean)) << r.variant << " " << r.metric;
    EXPECT_FALSE(std::isnan(r.standard_error));
  }
}

}  // namespace

TEST_F(EvalTest, DequantRowsAndIdentityBaseline) {
  const auto cfg = config("dequant");
  const auto images = corpus(cfg);
  ASSERT_EQ(images.size(), 6u);
  const ResultTable t = eval_dequant(cfg, images, all());
  // Three variants plus the identity arm, two metrics, two palette sizes.
  EXPECT_EQ(t.rows.size(), 4u * 2u * 2u);
  EXPECT_EQ(t.per_image.size(), 6u * 4u * 2u * 2u);
  for (const auto& r : t.rows) EXPECT_EQ(r.n, 6);
  const RasterImage& gt = images[2];
  const IndexedImage q = median_cut(gt, 8);
  double direct = ssim(render(q), gt);
  for (const auto& v : t.per_image) {
    if (v.variant == "identity" && v.palette_size == 8 && v.metric == "ssim" && v.image == 2) {
      EXPECT_EQ(v.value, direct);
    }
  }
  expect_no_nan(t);
  EXPECT_EQ(eval_dequant(cfg, images, all(), false).rows.size(), 3u * 2u * 2u);
}

TEST_F(EvalTest, MissingCheckpoint) {
  const auto cfg = config("missing");
  CheckpointSet partial = all();
  partial.erase("G");
  for (auto run : {0, 1, 2, 3}) {
    try {
      if (run == 0) eval_dequant(cfg, corpus(cfg), partial);
      if (run == 1) eval_texture_variants(cfg, corpus(cfg), partial);
      if (run == 2) eval_palette_transfer(cfg, corpus(cfg), partial, TransferMode::color);
      if (run == 3) eval_inpaint(cfg, corpus(cfg), partial, FillMode::mean);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::missing_checkpoint);
    }
  }
  partial.erase("T");
  EXPECT_THROW(eval_augmentation(cfg, corpus(cfg), partial, {0.0}), Error);
}

TEST_F(EvalTest, TextureVariantsPopulatesEveryCell) {
  const auto cfg = config("texture");
  const ResultTable t = eval_texture_variants(cfg, corpus(cfg), all());
  std::set<std::string> variants;
  for (const auto& r : t.rows) variants.insert(r.variant);
  EXPECT_EQ(variants, (std::set<std::string>{"G", "L", "L-post", "T"}));
  // 4 variants x 2 N x 2 arms x 4 metrics
  EXPECT_EQ(t.rows.size(), 4u * 2u * 2u * 4u);
  EXPECT_EQ(t.diagnostics.at("texture_off_stacks_identical"), 1.0);
  EXPECT_LE(t.diagnostics.at("l_post_max_luminance_deviation"), 1.5);
  expect_no_nan(t);
  EXPECT_NO_THROW(t.at("L-post", 4, true, "palette_ssim"));
  EXPECT_THROW(t.at("L-post", 16, true, "palette_ssim"), Error);
}

TEST_F(EvalTest, TextureOffMatchesDequantExperiment) {
  // Texture-off conditioning is the same stack in both experiments, and the
  // per-cell seed is shared, so the SSIM values coincide.
  const auto cfg = config("texture_off");
  const auto images = corpus(cfg);
  const ResultTable a = eval_dequant(cfg, images, all(), false);
  const ResultTable b = eval_texture_variants(cfg, images, all());
  for (const char* v : {"L", "G", "T"})
    for (int n : cfg.palette_sizes) EXPECT_EQ(a.at(v, n, false, "ssim").mean, b.at(v, n, false, "ssim").mean);
}

TEST_F(EvalTest, TransferAndInpaint) {
  const auto cfg = config("transfer");
  const auto images = corpus(cfg);
  for (auto mode : {TransferMode::color, TransferMode::negative_color}) {
    const ResultTable t = eval_palette_transfer(cfg, images, all(), mode);
    EXPECT_EQ(t.experiment, "transfer_" + std::string(to_string(mode)));
    EXPECT_NO_THROW(t.at("T", 8, true, "palette_ssim"));
    expect_no_nan(t);
  }
  const ResultTable mean = eval_inpaint(cfg, images, all(), FillMode::mean);
  EXPECT_NO_THROW(mean.at("L", 0, true, "psnr"));
  EXPECT_GT(mean.diagnostics.at("mean_mask_coverage"), 0.0);
  const ResultTable random = eval_inpaint(cfg, images, all(), FillMode::random);
  EXPECT_NO_THROW(random.at("T", 16, true, "palette_ssim"));
  expect_no_nan(random);
}

TEST(TransferIdentity, SameDonorLeavesConditioningPerfect) {
  for (const RasterImage& img : procedural_corpus(10, 3, 32)) {
    const IndexedImage q = median_cut(img, 8);
    const IndexedImage moved = transfer_palette(q, q.palette(), TransferMode::color);
    EXPECT_TRUE(moved == q);
    EXPECT_TRUE(std::isinf(palette_error(render(moved), q, 8, PaletteErrorMode::project).psnr));
  }
}

TEST_F(EvalTest, AugmentationStrengthZeroReproducesDequant) {
  auto cfg = config("aug");
  cfg.variants = {Variant::T};
  const auto images = corpus(cfg);
  const ResultTable d = eval_dequant(cfg, images, all(), false);
  const ResultTable a = eval_augmentation(cfg, images, all(), {0.0, 0.5});
  for (int n : cfg.palette_sizes) {
    EXPECT_EQ(a.at("T", n, false, "ssim@s=0").mean, d.at("T", n, false, "ssim").mean);
    EXPECT_NO_THROW(a.at("T", n, true, "ssim@s=0.5"));
  }
  EXPECT_THROW(eval_augmentation(cfg, images, all(), {1.5}), Error);
}

TEST_F(EvalTest, WorkerCountDoesNotChangeResults) {
  auto cfg = config("workers");
  const auto images = corpus(cfg);
  const ResultTable one = eval_texture_variants(cfg, images, all());
  cfg.workers = 3;
  const ResultTable three = eval_texture_variants(cfg, images, all());
  ASSERT_EQ(one.per_image.size(), three.per_image.size());
  for (std::size_t i = 0; i < one.per_image.size(); ++i) {
    EXPECT_EQ(one.per_image[i].metric, three.per_image[i].metric);
    EXPECT_EQ(one.per_image[i].value, three.per_image[i].value);
  }
}

TEST_F(EvalTest, OutputsAreDeterministicAndSummariesRecompute) {
  auto cfg = config("outputs");
  const auto images = corpus(cfg);
  std::map<std::string, std::string> base_hashes, control_hashes;
  for (const auto& [k, v] : *models_) {
    base_hashes[k] = v.base_hash();
    control_hashes[k] = v.control_hash();
  }
  const ResultTable t = eval_dequant(cfg, images, all());
  write_results(t, cfg, {{"T", "abc"}});
  const auto summary = slurp(cfg.output_dir / "dequant_summary.csv");
  const auto per_image = slurp(cfg.output_dir / "dequant_per_image.csv");
  EXPECT_TRUE(std::filesystem::exists(cfg.output_dir / "dequant_sheet.png"));
  const auto manifest = slurp(cfg.output_dir / "dequant_manifest.json");
  EXPECT_NE(manifest.find("\"abc\""), std::string::npos);

  write_results(eval_dequant(cfg, images, all()), cfg, {{"T", "abc"}});
  EXPECT_EQ(slurp(cfg.output_dir / "dequant_summary.csv"), summary);
  EXPECT_EQ(slurp(cfg.output_dir / "dequant_per_image.csv"), per_image);

  // Rebuild the summary from the per-image file alone.
  std::vector<ImageValue> values;
  for (const auto& c : read_csv(cfg.output_dir / "dequant_per_image.csv")) {
    ASSERT_EQ(c.size(), 7u);
    values.push_back({c[1], std::stoi(c[2]), c[3] == "on", c[4], std::stoi(c[5]), parse_metric(c[6])});
  }
  const auto rebuilt = summarize("dequant", values);
  const auto rows = read_csv(cfg.output_dir / "dequant_summary.csv");
  ASSERT_EQ(rebuilt.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(format_metric(rebuilt[i].mean), rows[i][5]);
    EXPECT_EQ(format_metric(rebuilt[i].standard_error), rows[i][6]);
    EXPECT_EQ(std::to_string(rebuilt[i].n), rows[i][7]);
  }

  for (const auto& [k, v] : *models_) {
    EXPECT_EQ(v.base_hash(), base_hashes[k]);
    EXPECT_EQ(v.control_hash(), control_hashes[k]);
  }
}

TEST(Corpus, FolderIsSortedAndCenterCropped) {
  const auto dir = test::scratch_dir("corpus");
  for (const auto& e : std::filesystem::directory_iterator(dir)) std::filesystem::remove(e.path());
  std::mt19937_64 rng(4);
  const RasterImage a = test::random_image(rng, 20, 18), b = test::random_image(rng, 16, 16);
  save_image(b, dir / "b.png");
  save_image(a, dir / "a.png");
  save_image(test::random_image(rng, 8, 8), dir / "c_small.png");
  ExperimentConfig cfg;
  cfg.corpus_dir = dir;
  cfg.image_size = 16;
  const auto corpus = load_corpus(cfg);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].at(0, 0), a.at(2, 1));
  EXPECT_TRUE(corpus[1] == b);
  cfg.n = 1;
  EXPECT_EQ(load_corpus(cfg).size(), 1u);
  cfg.corpus_dir = dir / "nope";
  EXPECT_THROW(load_corpus(cfg), Error);
}

TEST(Summarize, GroupsCellsInFirstSeenOrder) {
  const std::vector<ImageValue> v = {
      {"T", 4, false, "ssim", 0, 1.0}, {"L", 4, false, "ssim", 0, 3.0}, {"T", 4, false, "ssim", 1, 2.0}};
  const auto rows = summarize("x", v);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].variant, "T");
  EXPECT_EQ(rows[0].mean, 1.5);
  EXPECT_EQ(rows[0].n, 2);
  EXPECT_EQ(rows[1].standard_error, 0.0);
}

TEST(CellSeed, DependsOnImageAndPaletteSize) {
  SamplerConfig s;
  s.seed = 9;
  EXPECT_EQ(cell_seed(s, 1, 4), cell_seed(s, 1, 4));
  EXPECT_NE(cell_seed(s, 1, 4), cell_seed(s, 2, 4));
  EXPECT_NE(cell_seed(s, 1, 4), cell_seed(s, 1, 8));
}
