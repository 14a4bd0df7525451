#include <gtest/gtest.h>

#include "palettediff/cli.hpp"
#include "palettediff/config.hpp"
#include "palettediff/error.hpp"

using namespace palettediff;

TEST(KeyValueConfig, ParsesScalarsListsAndSections) {
  const auto cfg = KeyValueConfig::parse(
      "# run\n"
      "steps = 1500\n"
      "learning_rate=5e-4   # trailing\n"
      "corpus_dir = \"a dir/with # hash\"\n"
      "palette_sizes = [4, 8,16 ]\n"
      "strengths = 0, 0.5\n"
      "\n"
      "[checkpoint]\n"
      "T = t.ckpt\n");
  EXPECT_EQ(cfg.get_int("steps", 0), 1500);
  EXPECT_DOUBLE_EQ(cfg.get_double("learning_rate", 0), 5e-4);
  EXPECT_EQ(cfg.get("corpus_dir", ""), "a dir/with # hash");
  EXPECT_EQ(cfg.get_ints("palette_sizes", {}), (std::vector<int>{4, 8, 16}));
  EXPECT_EQ(cfg.get_doubles("strengths", {}), (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(cfg.get("checkpoint.T", ""), "t.ckpt");
  EXPECT_EQ(cfg.get_int("missing", 7), 7);
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("just words\n"), Error);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), Error);
  const auto cfg = KeyValueConfig::parse("n = ten\nflag = maybe\nlist = [1, 2\n");
  EXPECT_THROW(cfg.get_int("n", 0), Error);
  EXPECT_THROW(cfg.get_bool("flag", false), Error);
  EXPECT_THROW(cfg.get_ints("list", {}), Error);
  EXPECT_THROW(cfg.require_known({"n", "flag"}), Error);
  EXPECT_NO_THROW(cfg.require_known({"n", "flag", "list"}));
  try {
    KeyValueConfig::load("/nonexistent/x.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::file_not_found);
  }
}

TEST(KeyValueConfig, AssignmentsOverrideFileValues) {
  auto cfg = KeyValueConfig::parse("steps = 10\n");
  cfg.set_assignment("steps=20");
  cfg.set_assignment(" seed = 3 ");
  EXPECT_EQ(cfg.get_int("steps", 0), 20);
  EXPECT_EQ(cfg.get_u64("seed", 0), 3u);
  EXPECT_THROW(cfg.set_assignment("novalue"), Error);
}

TEST(JobConfig, TrainingAndExperimentKeys) {
  const auto base = base_job_from(KeyValueConfig::parse(
      "image_size = 16\nbase_channels = 8\nchannel_multipliers = [1, 2]\nschedule = cosine\ntimesteps = 200\n"
      "steps = 5\nbatch_size = 3\nlearning_rate = 1e-3\nseed = 9\n"));
  EXPECT_EQ(base.model.image_size, 16);
  EXPECT_EQ(base.model.channel_multipliers, (std::vector<int>{1, 2}));
  EXPECT_EQ(base.schedule.steps, 200);
  EXPECT_EQ(base.schedule.kind, ScheduleKind::cosine);
  EXPECT_EQ(base.options.batch_size, 3);
  EXPECT_EQ(base.options.seed, 9u);
  EXPECT_THROW(base_job_from(KeyValueConfig::parse("stepz = 5\n")), Error);

  const auto ctrl = control_job_from(KeyValueConfig::parse("variant = G\ntask_dequant = 1\ntask_inpaint = 0\n"));
  EXPECT_EQ(ctrl.variant, Variant::G);
  EXPECT_EQ(ctrl.mix.inpaint, 0.0);

  const auto def = experiment_config_from(KeyValueConfig{}, "dequant");
  EXPECT_EQ(def.palette_sizes, (std::vector<int>{4, 8, 16, 32}));
  EXPECT_EQ(def.n, 512);
  EXPECT_EQ(experiment_config_from(KeyValueConfig{}, "transfer").palette_sizes, (std::vector<int>{8, 32}));
  EXPECT_EQ(experiment_config_from(KeyValueConfig{}, "augmentation").n, 300);
  const auto e = experiment_config_from(
      KeyValueConfig::parse("n = 3\nvariants = [T]\nsampler_steps = 5\n[checkpoint]\nT = x.ckpt\n"), "dequant");
  EXPECT_EQ(e.n, 3);
  EXPECT_EQ(e.variants, std::vector<Variant>{Variant::T});
  EXPECT_EQ(e.sampler.steps, 5);
  EXPECT_EQ(e.checkpoints.at("T"), "x.ckpt");
  EXPECT_THROW(experiment_config_from(KeyValueConfig::parse("palette_sizes = [3]\n"), "dequant"), Error);
  EXPECT_THROW(experiment_config_from(KeyValueConfig::parse("n = 0\n"), "dequant"), Error);
}
