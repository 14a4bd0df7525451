#include "palettediff/cli.hpp"

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "palettediff/dataset.hpp"
#include "palettediff/error.hpp"
#include "palettediff/registry.hpp"
#include "palettediff/service.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

namespace {

struct UsageError {
  std::string message;
};

int check_colors(int n) {
  if (!PaletteSpec::valid(n)) throw UsageError{"colors must be a power of two in [4,128]"};
  return n;
}

template <typename T>
std::vector<T> parse_tuple(const std::string& text, std::size_t count, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw UsageError{std::string(what) + ": not an integer list: " + text};
    }
  }
  if (out.size() != count) throw UsageError{std::string(what) + ": expected " + std::to_string(count) + " values"};
  return out;
}

Rect parse_rect(const std::string& text) {
  const auto v = parse_tuple<int>(text, 4, "--mask-rect");
  return Rect{v[0], v[1], v[2], v[3]};
}

Rgb parse_rgb(const std::string& text) {
  const auto v = parse_tuple<int>(text, 3, "--color");
  Rgb c{};
  for (std::size_t k = 0; k < 3; ++k) {
    if (v[k] < 0 || v[k] > 255) throw UsageError{"--color channels must lie in [0,255]"};
    c[k] = static_cast<std::uint8_t>(v[k]);
  }
  return c;
}

// Flags shared by every generating subcommand.
struct GenerateFlags {
  std::string checkpoint;
  std::string checkpoint_dir;
  std::string variant;
  std::uint64_t seed = 0;
  int steps = 27;
  std::string out;

  void add(CLI::App* app, bool out_required) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint file; overrides the checkpoint directory lookup");
    app->add_option("--checkpoint-dir", checkpoint_dir,
                    "Directory of *.ckpt files searched by --variant (default $PALETTEDIFF_CHECKPOINT_DIR)");
    app->add_option("--variant", variant, "Texture variant of the checkpoint to use")
        ->check(CLI::IsMember({"L", "G", "T"}));
    app->add_option("--seed", seed, "Sampler seed")->capture_default_str();
    app->add_option("--steps", steps, "Sampler steps")->capture_default_str();
    auto* o = app->add_option("--out", out, "Output PNG");
    if (out_required) o->required();
  }

  void validate() const {
    if (steps < 1) throw UsageError{"--steps must be at least 1"};
    if (checkpoint.empty()) {
      if (variant.empty()) throw UsageError{"pass --checkpoint, or --variant with a checkpoint directory"};
      if (checkpoint_dir.empty() && default_checkpoint_dir().empty()) {
        throw UsageError{"no checkpoint: pass --checkpoint, --checkpoint-dir or set PALETTEDIFF_CHECKPOINT_DIR"};
      }
    }
  }

  Checkpoint load() const {
    if (!checkpoint.empty()) {
      Checkpoint ck = load_checkpoint(checkpoint);
      if (!variant.empty() && ck.tag() != variant) {
        throw Error(Errc::missing_checkpoint, checkpoint + " holds variant " + ck.tag() + ", not " + variant);
      }
      return ck;
    }
    const std::filesystem::path dir = checkpoint_dir.empty() ? default_checkpoint_dir() : std::filesystem::path(checkpoint_dir);
    const CheckpointRegistry reg = CheckpointRegistry::load_dir(dir);
    return reg.require(variant);
  }

  SamplerConfig sampler() const {
    SamplerConfig s;
    s.seed = seed;
    s.steps = steps;
    return s;
  }
};

KeyValueConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueConfig cfg = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
  for (const auto& o : overrides) cfg.set_assignment(o);
  return cfg;
}

TrainOptions train_options_from(const KeyValueConfig& cfg, TrainOptions base) {
  base.steps = cfg.get_int("steps", base.steps);
  base.batch_size = cfg.get_int("batch_size", base.batch_size);
  base.learning_rate = cfg.get_double("learning_rate", base.learning_rate);
  base.weight_decay = cfg.get_double("weight_decay", base.weight_decay);
  base.grad_clip = cfg.get_double("grad_clip", base.grad_clip);
  base.seed = cfg.get_u64("seed", base.seed);
  base.warmup_steps = cfg.get_int("warmup_steps", base.warmup_steps);
  base.cosine_decay = cfg.get_bool("cosine_decay", base.cosine_decay);
  base.ema_decay = cfg.get_double("ema_decay", base.ema_decay);
  if (base.steps < 1 || base.batch_size < 1 || !(base.learning_rate > 0.0)) {
    throw Error(Errc::invalid_argument, "steps, batch_size and learning_rate must be positive");
  }
  return base;
}

const std::vector<std::string> kTrainKeys = {"steps",     "batch_size",   "learning_rate", "weight_decay",
                                             "grad_clip", "warmup_steps", "cosine_decay",  "ema_decay",
                                             "seed",      "data_dir",     "loss_csv",      "log_every"};

std::unique_ptr<ImageSource> make_source(const std::string& dir, int size) {
  if (dir.empty()) return std::make_unique<ProceduralSource>(size);
  return std::make_unique<FolderSource>(dir, size);
}

TrainOptions with_progress(TrainOptions opts, int every, std::ostream& err) {
  if (every > 0) {
    opts.progress = [every, &err](int step, double loss) {
      if (step % every == 0) err << "step " << step << " loss " << format_metric(loss) << '\n';
    };
  }
  return opts;
}

void print_table(const ResultTable& t, std::ostream& out) {
  out << "variant,palette_size,texture,metric,mean,standard_error,n\n";
  for (const ResultRow& r : t.rows) {
    out << r.variant << ',' << r.palette_size << ',' << (r.texture ? "on" : "off") << ',' << r.metric << ','
        << format_metric(r.mean) << ',' << format_metric(r.standard_error) << ',' << r.n << '\n';
  }
  for (const auto& [k, v] : t.diagnostics) out << "# " << k << " = " << format_metric(v) << '\n';
}

}  // namespace

BaseTrainingJob base_job_from(const KeyValueConfig& cfg) {
  std::vector<std::string> known = kTrainKeys;
  known.insert(known.end(), {"image_size", "base_channels", "channel_multipliers", "schedule", "timesteps"});
  cfg.require_known(known);
  BaseTrainingJob job;
  job.model.image_size = cfg.get_int("image_size", job.model.image_size);
  job.model.base_channels = cfg.get_int("base_channels", job.model.base_channels);
  job.model.channel_multipliers = cfg.get_ints("channel_multipliers", job.model.channel_multipliers);
  job.model.validate();
  job.schedule = make_schedule(cfg.get_int("timesteps", 1000), parse_schedule_kind(cfg.get("schedule", "linear")));
  job.options = train_options_from(cfg, TrainOptions{});
  job.data_dir = cfg.get("data_dir", "");
  job.loss_csv = cfg.get("loss_csv", "");
  return job;
}

ControlTrainingJob control_job_from(const KeyValueConfig& cfg) {
  std::vector<std::string> known = kTrainKeys;
  known.insert(known.end(), {"base_checkpoint", "variant", "task_dequant", "task_inpaint", "dropout_whole_image",
                             "dropout_inside_mask"});
  cfg.require_known(known);
  ControlTrainingJob job;
  job.base_checkpoint = cfg.get("base_checkpoint", "");
  job.variant = parse_variant(cfg.get("variant", "T"));
  job.mix.dequant = cfg.get_double("task_dequant", job.mix.dequant);
  job.mix.inpaint = cfg.get_double("task_inpaint", job.mix.inpaint);
  job.dropout.whole_image = cfg.get_double("dropout_whole_image", job.dropout.whole_image);
  job.dropout.inside_mask = cfg.get_double("dropout_inside_mask", job.dropout.inside_mask);
  job.options = train_options_from(cfg, TrainOptions{});
  job.data_dir = cfg.get("data_dir", "");
  job.loss_csv = cfg.get("loss_csv", "");
  return job;
}

ExperimentConfig experiment_config_from(const KeyValueConfig& cfg, const std::string& experiment) {
  cfg.require_known({"corpus_dir", "corpus_seed", "n", "image_size", "palette_sizes", "variants", "checkpoint.*",
                     "checkpoint_dir", "sampler_steps", "sampler_seed", "threshold_p", "threshold_c", "workers",
                     "contact_sheet_rows", "transfer_mode", "fill", "strengths"});
  ExperimentConfig e;
  if (experiment == "transfer") e.palette_sizes = {8, 32};
  if (experiment == "augmentation") e.n = 300;
  if (cfg.has("corpus_dir")) e.corpus_dir = cfg.get("corpus_dir", "");
  e.corpus_seed = cfg.get_u64("corpus_seed", e.corpus_seed);
  e.n = cfg.get_int("n", e.n);
  e.image_size = cfg.get_int("image_size", e.image_size);
  e.palette_sizes = cfg.get_ints("palette_sizes", e.palette_sizes);
  if (cfg.has("variants")) {
    e.variants.clear();
    for (const auto& v : cfg.get_strings("variants", {})) e.variants.push_back(parse_variant(v));
  }
  if (experiment == "augmentation") e.variants = {Variant::T};
  for (const auto& [k, v] : cfg.values()) {
    if (k.starts_with("checkpoint.")) e.checkpoints[k.substr(11)] = v;
  }
  e.sampler.steps = cfg.get_int("sampler_steps", e.sampler.steps);
  e.sampler.seed = cfg.get_u64("sampler_seed", e.sampler.seed);
  e.sampler.thresholding_p = cfg.get_double("threshold_p", e.sampler.thresholding_p);
  e.sampler.thresholding_c = cfg.get_double("threshold_c", e.sampler.thresholding_c);
  e.workers = cfg.get_int("workers", e.workers);
  e.contact_sheet_rows = cfg.get_int("contact_sheet_rows", e.contact_sheet_rows);
  e.validate();
  return e;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Palette-conditioned image dequantization, transfer and inpainting", "palettediff"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "palettediff 1.0");

  // quantize
  std::string q_input, q_out_image, q_out_palette;
  int q_colors = 0;
  auto* quant = app.add_subcommand("quantize", "Median-cut quantization");
  quant->add_option("--input", q_input, "Input PNG")->required();
  quant->add_option("--colors", q_colors, "Palette size, a power of two in [4,128]")->required();
  quant->add_option("--out-image", q_out_image, "Quantized PNG");
  quant->add_option("--out-palette", q_out_palette, "Palette JSON");

  // dequantize
  std::string d_input, d_texture = "off", d_texture_src;
  int d_colors = 0;
  bool d_l_post = false;
  GenerateFlags d_gen;
  auto* deq = app.add_subcommand("dequantize", "Generate a full-color image from a quantized one");
  deq->add_option("--input", d_input, "Quantized PNG, at most --colors distinct colors")->required();
  deq->add_option("--colors", d_colors, "Palette size, a power of two in [4,128]")->required();
  deq->add_option("--texture", d_texture, "Texture conditioning")->check(CLI::IsMember({"off", "on"}))
      ->capture_default_str();
  deq->add_option("--texture-src", d_texture_src, "PNG the texture channels are computed from");
  deq->add_flag("--l-post", d_l_post, "Replace the output luminance with that of --texture-src");
  d_gen.add(deq, true);

  // transfer
  std::string t_input, t_donor, t_colormap, t_mode = "color", t_texture = "off", t_out_quantized;
  int t_colors = 0;
  bool t_l_post = false;
  GenerateFlags t_gen;
  auto* tr = app.add_subcommand("transfer", "Move an image onto another palette, then dequantize");
  tr->add_option("--input", t_input, "Source PNG")->required();
  auto* donor_opt = tr->add_option("--donor", t_donor, "PNG whose median-cut palette is the target");
  auto* cmap_opt = tr->add_option("--colormap", t_colormap, "Colormap JSON ([[r,g,b], ...] stops) resampled to N");
  donor_opt->excludes(cmap_opt);
  tr->add_option("--colors", t_colors, "Palette size, a power of two in [4,128]")->required();
  tr->add_option("--mode", t_mode, "Matching cost")->check(CLI::IsMember({"color", "negative-color"}))
      ->capture_default_str();
  tr->add_option("--texture", t_texture, "Texture conditioning from --input")
      ->check(CLI::IsMember({"off", "on"}))
      ->capture_default_str();
  tr->add_flag("--l-post", t_l_post, "Replace the output luminance with that of --input");
  tr->add_option("--out-quantized", t_out_quantized, "Transferred quantized PNG");
  t_gen.add(tr, false);

  // inpaint
  std::string i_input, i_color = "mean", i_texture = "on";
  std::vector<std::string> i_rects;
  bool i_texture_in_mask = false;
  GenerateFlags i_gen;
  auto* inp = app.add_subcommand("inpaint", "Recolor rectangular regions");
  inp->add_option("--input", i_input, "Input PNG")->required();
  inp->add_option("--mask-rect", i_rects, "Rectangle top,left,height,width; repeatable")->required();
  inp->add_option("--color", i_color, "Fill color R,G,B or mean")->capture_default_str();
  inp->add_flag("--texture-in-mask", i_texture_in_mask, "Keep texture channels inside the mask");
  inp->add_option("--texture", i_texture, "Texture conditioning")->check(CLI::IsMember({"off", "on"}))
      ->capture_default_str();
  i_gen.add(inp, true);

  // training
  std::string tb_config, tb_out;
  std::vector<std::string> tb_set;
  auto* tbase = app.add_subcommand("train-base", "Train the unconditional base denoiser");
  tbase->add_option("--config", tb_config, "key = value config file")->required();
  tbase->add_option("--out-checkpoint", tb_out, "Checkpoint to write")->required();
  tbase->add_option("--set", tb_set, "Override a config key, key=value; repeatable");

  std::string tc_config, tc_out, tc_base;
  std::vector<std::string> tc_set;
  auto* tctrl = app.add_subcommand("train-control", "Train a control encoder on a frozen base");
  tctrl->add_option("--config", tc_config, "key = value config file")->required();
  tctrl->add_option("--out-checkpoint", tc_out, "Checkpoint to write")->required();
  tctrl->add_option("--base", tc_base, "Base checkpoint; overrides base_checkpoint");
  tctrl->add_option("--set", tc_set, "Override a config key, key=value; repeatable");

  // eval
  std::string e_experiment, e_config, e_out_dir, e_ckpt_dir;
  std::vector<std::string> e_set;
  auto* ev = app.add_subcommand("eval", "Run an evaluation experiment");
  ev->add_option("--experiment", e_experiment, "Experiment")
      ->required()
      ->check(CLI::IsMember({"dequant", "texture_variants", "transfer", "inpaint", "augmentation"}));
  ev->add_option("--config", e_config, "key = value config file");
  ev->add_option("--out-dir", e_out_dir, "Output directory")->required();
  ev->add_option("--checkpoint-dir", e_ckpt_dir,
                 "Directory searched for variants without a checkpoint.<tag> key (default $PALETTEDIFF_CHECKPOINT_DIR)");
  ev->add_option("--set", e_set, "Override a config key, key=value; repeatable");

  // serve
  std::string s_addr = "127.0.0.1:8080", s_ckpt_dir;
  int s_max_side = 256;
  auto* srv = app.add_subcommand("serve", "HTTP API for the editing UI");
  srv->add_option("--addr", s_addr, "host:port to listen on")->capture_default_str();
  srv->add_option("--checkpoint-dir", s_ckpt_dir, "Directory of *.ckpt files (default $PALETTEDIFF_CHECKPOINT_DIR)");
  srv->add_option("--max-side", s_max_side, "Largest accepted image side")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    try {
      if (*quant) {
        check_colors(q_colors);
        if (q_out_image.empty() && q_out_palette.empty()) throw UsageError{"pass --out-image and/or --out-palette"};
        const IndexedImage q = median_cut(load_image(q_input), PaletteSpec{q_colors});
        if (!q_out_image.empty()) save_image(render(q), q_out_image);
        if (!q_out_palette.empty()) save_palette(q.palette(), q_out_palette);
        return 0;
      }
      if (*deq) {
        check_colors(d_colors);
        d_gen.validate();
        if ((d_texture == "on" || d_l_post) && d_texture_src.empty()) {
          throw UsageError{"--texture on and --l-post need --texture-src"};
        }
        const Checkpoint ck = d_gen.load();
        const IndexedImage q = index_exact(load_image(d_input));
        if (q.palette().size() > d_colors) {
          throw Error(Errc::size_mismatch, d_input + " has " + std::to_string(q.palette().size()) +
                                               " colors, more than --colors " + std::to_string(d_colors));
        }
        std::optional<RasterImage> tex;
        if (!d_texture_src.empty()) tex = load_image(d_texture_src);
        const DequantizeOptions opts{d_texture == "on", tex ? &*tex : nullptr, d_l_post};
        save_image(dequantize(ck, q, d_colors, opts, d_gen.sampler()), d_gen.out);
        return 0;
      }
      if (*tr) {
        check_colors(t_colors);
        if (t_donor.empty() == t_colormap.empty()) throw UsageError{"pass exactly one of --donor and --colormap"};
        if (t_out_quantized.empty() && t_gen.out.empty()) throw UsageError{"pass --out and/or --out-quantized"};
        if (!t_gen.out.empty()) t_gen.validate();
        const RasterImage src = load_image(t_input);
        const IndexedImage q = median_cut(src, PaletteSpec{t_colors});
        const Palette target = t_donor.empty() ? resample_colormap(load_colormap(t_colormap), q.palette().size())
                                               : median_cut(load_image(t_donor), PaletteSpec{t_colors}).palette();
        if (target.size() != q.palette().size()) {
          throw Error(Errc::size_mismatch, "target palette has " + std::to_string(target.size()) +
                                               " colors, the source palette " + std::to_string(q.palette().size()));
        }
        const IndexedImage moved = transfer_palette(q, target, parse_transfer_mode(t_mode));
        std::optional<RasterImage> result;
        if (!t_gen.out.empty()) {
          const DequantizeOptions opts{t_texture == "on", &src, t_l_post};
          result = dequantize(t_gen.load(), moved, t_colors, opts, t_gen.sampler());
        }
        if (!t_out_quantized.empty()) save_image(render(moved), t_out_quantized);
        if (result) save_image(*result, t_gen.out);
        return 0;
      }
      if (*inp) {
        i_gen.validate();
        std::vector<Rect> rects;
        for (const auto& r : i_rects) rects.push_back(parse_rect(r));
        const Fill fill = i_color == "mean" ? Fill{MeanFill{}} : Fill{parse_rgb(i_color)};
        const RasterImage img = load_image(i_input);
        const MaskSpec mask{img.height(), img.width(), rects};
        const InpaintOptions opts{i_texture == "on", i_texture_in_mask};
        save_image(inpaint(i_gen.load(), img, mask, fill, opts, i_gen.sampler()), i_gen.out);
        return 0;
      }
      if (*tbase) {
        const KeyValueConfig cfg = load_config(tb_config, tb_set);
        const BaseTrainingJob job = base_job_from(cfg);
        const auto data = make_source(job.data_dir, job.model.image_size);
        Checkpoint ck = train_base(*data, job.model, job.schedule,
                                   with_progress(job.options, cfg.get_int("log_every", 100), err));
        save_checkpoint(ck, tb_out);
        if (!job.loss_csv.empty()) write_loss_csv(ck.base_meta, job.loss_csv);
        err << "trained base in " << ck.base_meta.seconds << " s, final loss "
            << format_metric(ck.base_meta.loss_curve.back()) << '\n';
        return 0;
      }
      if (*tctrl) {
        const KeyValueConfig cfg = load_config(tc_config, tc_set);
        ControlTrainingJob job = control_job_from(cfg);
        if (!tc_base.empty()) job.base_checkpoint = tc_base;
        if (job.base_checkpoint.empty()) throw UsageError{"no base checkpoint: set base_checkpoint or pass --base"};
        const Checkpoint base = load_checkpoint(job.base_checkpoint);
        const auto data = make_source(job.data_dir, base.config.image_size);
        Checkpoint ck = train_control(*data, base, job.variant, job.mix,
                                      with_progress(job.options, cfg.get_int("log_every", 100), err), job.dropout);
        save_checkpoint(ck, tc_out);
        if (!job.loss_csv.empty()) write_loss_csv(*ck.control_meta, job.loss_csv);
        err << "trained control encoder " << ck.tag() << " in " << ck.control_meta->seconds << " s\n";
        return 0;
      }
      if (*ev) {
        KeyValueConfig kv = load_config(e_config, e_set);
        ExperimentConfig cfg = experiment_config_from(kv, e_experiment);
        cfg.output_dir = e_out_dir;
        std::vector<std::string> tags;
        for (Variant v : cfg.variants) tags.emplace_back(to_string(v));
        std::optional<CheckpointRegistry> dir_reg;
        const std::filesystem::path dir =
            !e_ckpt_dir.empty() ? std::filesystem::path(e_ckpt_dir)
                                : std::filesystem::path(kv.get("checkpoint_dir", default_checkpoint_dir().string()));
        CheckpointRegistry loaded;
        for (const auto& tag : tags) {
          const auto it = cfg.checkpoints.find(tag);
          if (it != cfg.checkpoints.end()) {
            loaded.add(tag, it->second, load_checkpoint(it->second));
            continue;
          }
          if (dir.empty()) throw Error(Errc::missing_checkpoint, "no checkpoint for variant " + tag);
          if (!dir_reg) dir_reg = CheckpointRegistry::load_dir(dir);
          const RegistryEntry* e = dir_reg->find(tag);
          if (e == nullptr) throw Error(Errc::missing_checkpoint, "no checkpoint for variant " + tag + " in " + dir.string());
          cfg.checkpoints[tag] = e->path;
          loaded.add(tag, e->path, load_checkpoint(e->path));
        }
        CheckpointSet set;
        std::map<std::string, std::string> hashes;
        for (const auto& tag : tags) {
          const RegistryEntry* e = loaded.find(tag);
          if (e == nullptr || e->checkpoint->tag() != tag) {
            throw Error(Errc::missing_checkpoint, "checkpoint for " + tag + " holds a different variant");
          }
          set[tag] = e->checkpoint.get();
          hashes[tag] = e->content_hash;
        }
        const std::vector<RasterImage> corpus = load_corpus(cfg);
        ResultTable table;
        if (e_experiment == "dequant") {
          table = eval_dequant(cfg, corpus, set);
        } else if (e_experiment == "texture_variants") {
          table = eval_texture_variants(cfg, corpus, set);
        } else if (e_experiment == "transfer") {
          table = eval_palette_transfer(cfg, corpus, set, parse_transfer_mode(kv.get("transfer_mode", "color")));
        } else if (e_experiment == "inpaint") {
          table = eval_inpaint(cfg, corpus, set, parse_fill_mode(kv.get("fill", "mean")));
        } else {
          table = eval_augmentation(cfg, corpus, set, kv.get_doubles("strengths", {0.0, 0.25, 0.5, 0.75, 1.0}));
        }
        for (const auto& tag : tags) {
          if (git_blob_sha1_file(cfg.checkpoints.at(tag).string()) != hashes.at(tag)) {
            throw Error(Errc::frozen_violation, "checkpoint for " + tag + " changed during the run");
          }
        }
        write_results(table, cfg, hashes);
        print_table(table, out);
        return 0;
      }
      if (*srv) {
        const auto colon = s_addr.rfind(':');
        if (colon == std::string::npos) throw UsageError{"--addr must be host:port"};
        const std::string host = s_addr.substr(0, colon);
        int port = 0;
        try {
          port = std::stoi(s_addr.substr(colon + 1));
        } catch (const std::exception&) {
          throw UsageError{"--addr must be host:port"};
        }
        if (s_max_side < 1) throw UsageError{"--max-side must be positive"};
        const std::filesystem::path dir = s_ckpt_dir.empty() ? default_checkpoint_dir() : std::filesystem::path(s_ckpt_dir);
        auto reg = std::make_shared<const CheckpointRegistry>(dir.empty() ? CheckpointRegistry{}
                                                                          : CheckpointRegistry::load_dir(dir));
        const Service service(reg, ServiceOptions{s_max_side, "*"});
        HttpServer server(service);
        const int bound = server.bind(host, port);
        out << "listening on " << host << ':' << bound << " with " << reg->entries().size() << " checkpoint(s)"
            << std::endl;
        server.listen();
        return 0;
      }
    } catch (const UsageError& e) {
      err << "error: " << e.message << '\n';
      return 1;
    }
  } catch (const Error& e) {
    err << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace palettediff
