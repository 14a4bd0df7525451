#include "palettediff/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <tuple>
#include <thread>

#include "json.hpp"
#include "palettediff/error.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (n < 1) throw Error(Errc::invalid_argument, "image budget n must be at least 1");
  if (workers < 1) throw Error(Errc::invalid_argument, "workers must be at least 1");
  if (palette_sizes.empty()) throw Error(Errc::invalid_argument, "at least one palette size is required");
  for (int p : palette_sizes) (void)PaletteSpec{p};
}

const ResultRow& ResultTable::at(std::string_view variant, int palette_size, bool texture,
                                 std::string_view metric) const {
  for (const ResultRow& r : rows) {
    if (r.variant == variant && r.palette_size == palette_size && r.texture == texture && r.metric == metric) return r;
  }
  throw Error(Errc::invalid_argument, "no result cell " + std::string(variant) + "/" + std::to_string(palette_size) +
                                          "/" + (texture ? "on" : "off") + "/" + std::string(metric));
}

std::string_view to_string(FillMode m) { return m == FillMode::mean ? "mean" : "random"; }

FillMode parse_fill_mode(std::string_view text) {
  if (text == "mean") return FillMode::mean;
  if (text == "random") return FillMode::random;
  throw Error(Errc::invalid_argument, "fill must be mean or random");
}

std::vector<RasterImage> load_corpus(const ExperimentConfig& cfg) {
  if (!cfg.corpus_dir) return procedural_corpus(cfg.n, cfg.corpus_seed, cfg.image_size);
  if (!std::filesystem::is_directory(*cfg.corpus_dir)) {
    throw Error(Errc::file_not_found, "corpus directory not found: " + cfg.corpus_dir->string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(*cfg.corpus_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RasterImage> out;
  for (const auto& f : files) {
    if (static_cast<int>(out.size()) == cfg.n) break;
    const RasterImage img = load_image(f);
    if (img.width() < cfg.image_size || img.height() < cfg.image_size) continue;
    out.push_back(crop(img, (img.width() - cfg.image_size) / 2, (img.height() - cfg.image_size) / 2,
                       cfg.image_size, cfg.image_size));
  }
  if (out.empty()) throw Error(Errc::empty_dataset, "no usable images in " + cfg.corpus_dir->string());
  return out;
}

std::uint64_t cell_seed(const SamplerConfig& base, int image, int palette_size) {
  return derive_seed(base.seed, {static_cast<std::uint64_t>(image), static_cast<std::uint64_t>(palette_size)});
}

namespace {

struct ImageResult {
  std::vector<ImageValue> values;
  std::vector<RasterImage> tiles;
};

class Recorder {
 public:
  explicit Recorder(int image) : image_(image) {}
  void add(const std::string& variant, int n, bool texture, const std::string& metric, double value) {
    result.values.push_back({variant, n, texture, metric, image_, value});
  }
  ImageResult result;

 private:
  int image_;
};

template <typename F>
ResultTable run_images(const std::string& id, const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                       F&& per_image) {
  cfg.validate();
  if (corpus.empty()) throw Error(Errc::empty_dataset, "evaluation corpus is empty");
  const int n = std::min<int>(cfg.n, static_cast<int>(corpus.size()));
  std::vector<ImageResult> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&]() {
    for (int i = next++; i < n; i = next++) {
      try {
        Recorder rec(i);
        per_image(i, corpus[static_cast<std::size_t>(i)], rec);
        results[static_cast<std::size_t>(i)] = std::move(rec.result);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int workers = std::min(cfg.workers, n);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ResultTable table;
  table.experiment = id;
  for (int i = 0; i < n; ++i) {
    auto& r = results[static_cast<std::size_t>(i)];
    table.per_image.insert(table.per_image.end(), r.values.begin(), r.values.end());
    if (i < cfg.contact_sheet_rows && !r.tiles.empty()) table.contact_sheet.push_back(std::move(r.tiles));
  }
  table.rows = summarize(id, table.per_image);
  return table;
}

const Checkpoint& need(const CheckpointSet& ckpts, const std::string& tag) {
  const auto it = ckpts.find(tag);
  if (it == ckpts.end() || it->second == nullptr) {
    throw Error(Errc::missing_checkpoint, "no checkpoint for variant " + tag);
  }
  return *it->second;
}

SamplerConfig seeded(const SamplerConfig& base, int image, int n) {
  SamplerConfig s = base;
  s.seed = cell_seed(base, image, n);
  return s;
}

std::string tag(Variant v) { return std::string(to_string(v)); }

void add_gt(Recorder& rec, const std::string& variant, int n, bool tex, const RasterImage& out,
            const RasterImage& gt) {
  rec.add(variant, n, tex, "psnr", psnr(out, gt));
  rec.add(variant, n, tex, "ssim", ssim(out, gt));
}

void add_palette(Recorder& rec, const std::string& variant, int n, bool tex, const RasterImage& out,
                 const IndexedImage& q, int colors) {
  const MetricReport m = palette_error(out, q, colors);
  rec.add(variant, n, tex, "palette_psnr", m.psnr);
  rec.add(variant, n, tex, "palette_ssim", m.ssim);
}

std::uint64_t stack_digest(const ConditioningStack& s) {
  Fnv1a h;
  h.update(s.data.data(), static_cast<std::size_t>(s.data.size()) * sizeof(float));
  return h.digest();
}

}  // namespace

std::vector<ResultRow> summarize(const std::string& experiment, const std::vector<ImageValue>& values) {
  std::vector<ResultRow> rows;
  std::vector<std::vector<double>> cells;
  std::map<std::tuple<std::string, int, bool, std::string>, std::size_t> index;
  for (const ImageValue& v : values) {
    const auto key = std::make_tuple(v.variant, v.palette_size, v.texture, v.metric);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      rows.push_back({experiment, v.variant, v.palette_size, v.texture, v.metric, 0.0, 0.0, 0});
      cells.emplace_back();
    }
    cells[it->second].push_back(v.value);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Aggregate a = aggregate(cells[i]);
    rows[i].mean = a.mean;
    rows[i].standard_error = a.standard_error;
    rows[i].n = a.n;
  }
  return rows;
}

ResultTable eval_dequant(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                         const CheckpointSet& ckpts, bool identity_baseline) {
  for (Variant v : cfg.variants) need(ckpts, tag(v));
  return run_images("dequant", cfg, corpus, [&](int i, const RasterImage& gt, Recorder& rec) {
    for (int n : cfg.palette_sizes) {
      const IndexedImage q = median_cut(gt, PaletteSpec{n});
      const RasterImage input = render(q);
      if (n == cfg.palette_sizes.front()) rec.result.tiles = {gt, input};
      if (identity_baseline) add_gt(rec, "identity", n, false, input, gt);
      const ConditioningStack stack = build_dequant_stack(q, PaletteSpec{n}, Variant::noTex, nullptr, false);
      for (Variant v : cfg.variants) {
        const RasterImage out = sample(need(ckpts, tag(v)), stack, seeded(cfg.sampler, i, n));
        add_gt(rec, tag(v), n, false, out, gt);
        if (n == cfg.palette_sizes.front()) rec.result.tiles.push_back(out);
      }
    }
  });
}

ResultTable eval_texture_variants(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                                  const CheckpointSet& ckpts) {
  for (Variant v : cfg.variants) need(ckpts, tag(v));
  const bool with_post = std::find(cfg.variants.begin(), cfg.variants.end(), Variant::L) != cfg.variants.end();
  std::atomic<bool> stacks_identical{true};
  double worst_post = 0.0;
  std::mutex post_mutex;
  ResultTable table = run_images("texture_variants", cfg, corpus, [&](int i, const RasterImage& gt, Recorder& rec) {
    const Plane gt_lum = luminance(gt);
    for (int n : cfg.palette_sizes) {
      const IndexedImage q = median_cut(gt, PaletteSpec{n});
      const bool sheet = n == cfg.palette_sizes.front();
      if (sheet) rec.result.tiles = {gt, render(q)};
      std::optional<std::uint64_t> off_digest;
      for (Variant v : cfg.variants) {
        const Checkpoint& ck = need(ckpts, tag(v));
        for (bool tex : {false, true}) {
          const ConditioningStack stack = build_dequant_stack(q, PaletteSpec{n}, v, &gt, tex);
          if (!tex) {
            const std::uint64_t d = stack_digest(stack);
            if (off_digest && *off_digest != d) stacks_identical = false;
            off_digest = d;
          }
          const RasterImage out = sample(ck, stack, seeded(cfg.sampler, i, n));
          add_gt(rec, tag(v), n, tex, out, gt);
          add_palette(rec, tag(v), n, tex, out, q, n);
          if (sheet && tex) rec.result.tiles.push_back(out);
          if (v == Variant::L && with_post) {
            const RasterImage post = replace_luminance(out, gt_lum);
            const double dev = (luminance(post) - gt_lum).abs().maxCoeff();
            {
              std::lock_guard<std::mutex> lock(post_mutex);
              worst_post = std::max(worst_post, dev);
            }
            if (dev > 1.5) throw Error(Errc::invalid_argument, "L-post luminance deviates from the source");
            add_gt(rec, "L-post", n, tex, post, gt);
            add_palette(rec, "L-post", n, tex, post, q, n);
          }
        }
      }
    }
  });
  if (!stacks_identical) throw Error(Errc::invalid_argument, "texture-off stacks differ between variants");
  table.diagnostics["texture_off_stacks_identical"] = 1.0;
  if (with_post) table.diagnostics["l_post_max_luminance_deviation"] = worst_post;
  return table;
}

ResultTable eval_palette_transfer(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                                  const CheckpointSet& ckpts, TransferMode mode) {
  for (Variant v : cfg.variants) need(ckpts, tag(v));
  const int total = std::min<int>(cfg.n, static_cast<int>(corpus.size()));
  std::atomic<int> skipped{0};
  ResultTable table = run_images(std::string("transfer_") + std::string(to_string(mode)), cfg, corpus,
                                 [&](int i, const RasterImage& gt, Recorder& rec) {
    for (int n : cfg.palette_sizes) {
      const IndexedImage q = median_cut(gt, PaletteSpec{n});
      // Donor: first image of a seeded shuffle whose palette has the same size.
      std::vector<int> order;
      for (int j = 0; j < total; ++j)
        if (j != i) order.push_back(j);
      std::mt19937_64 rng(derive_seed(cfg.corpus_seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(n), 7}));
      std::shuffle(order.begin(), order.end(), rng);
      std::optional<Palette> donor;
      for (int j : order) {
        const IndexedImage d = median_cut(corpus[static_cast<std::size_t>(j)], PaletteSpec{n});
        if (d.palette().size() == q.palette().size()) {
          donor = d.palette();
          break;
        }
      }
      if (!donor) {
        ++skipped;
        continue;
      }
      const IndexedImage moved = transfer_palette(q, *donor, mode);
      const bool sheet = n == cfg.palette_sizes.front();
      if (sheet) rec.result.tiles = {gt, render(q), render(moved)};
      for (Variant v : cfg.variants) {
        const Checkpoint& ck = need(ckpts, tag(v));
        for (bool tex : {false, true}) {
          const ConditioningStack stack = build_dequant_stack(moved, PaletteSpec{n}, v, &gt, tex);
          const RasterImage out = sample(ck, stack, seeded(cfg.sampler, i, n));
          add_palette(rec, tag(v), n, tex, out, moved, n);
          if (sheet && tex) rec.result.tiles.push_back(out);
        }
      }
    }
  });
  table.diagnostics["skipped_without_donor"] = skipped;
  return table;
}

ResultTable eval_inpaint(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                         const CheckpointSet& ckpts, FillMode fill) {
  for (Variant v : cfg.variants) need(ckpts, tag(v));
  constexpr int kPaletteColors = 16;
  std::vector<double> coverage(static_cast<std::size_t>(std::min<int>(cfg.n, static_cast<int>(corpus.size()))));
  ResultTable table = run_images(std::string("inpaint_") + std::string(to_string(fill)), cfg, corpus,
                                 [&](int i, const RasterImage& gt, Recorder& rec) {
    const auto id = static_cast<std::uint64_t>(i);
    const MaskSpec mask = random_mask(gt.height(), gt.width(), derive_seed(cfg.corpus_seed, {id, 11}));
    coverage[static_cast<std::size_t>(i)] = mask.coverage();
    Fill f = MeanFill{};
    if (fill == FillMode::random) {
      std::mt19937_64 rng(derive_seed(cfg.corpus_seed, {id, 12}));
      std::uniform_int_distribution<int> u(0, 255);
      f = Rgb{static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng))};
    }
    const int n = fill == FillMode::random ? kPaletteColors : 0;
    std::optional<IndexedImage> q_in;
    for (Variant v : cfg.variants) {
      const Checkpoint& ck = need(ckpts, tag(v));
      for (bool tex : {false, true}) {
        const ConditioningStack stack = build_inpaint_stack(gt, mask, f, v, tex, tex);
        if (!q_in) {
          // The filled input is what the stack's color channels show.
          RasterImage filled(gt.width(), gt.height());
          for (int k = 0; k < gt.size(); ++k) {
            filled.set(k, {to_channel(stack.data(0, k) * 255.0), to_channel(stack.data(1, k) * 255.0),
                           to_channel(stack.data(2, k) * 255.0)});
          }
          q_in = median_cut(filled, kPaletteColors);
          rec.result.tiles = {gt, filled};
        }
        const RasterImage out = sample(ck, stack, seeded(cfg.sampler, i, n));
        if (fill == FillMode::mean) {
          add_gt(rec, tag(v), n, tex, out, gt);
        } else {
          add_palette(rec, tag(v), n, tex, out, *q_in, kPaletteColors);
        }
        if (tex) rec.result.tiles.push_back(out);
      }
    }
  });
  table.diagnostics["mean_mask_coverage"] = aggregate(coverage).mean;
  return table;
}

ResultTable eval_augmentation(const ExperimentConfig& cfg, const std::vector<RasterImage>& corpus,
                              const CheckpointSet& ckpts, const std::vector<double>& strengths) {
  const Checkpoint& ck = need(ckpts, "T");
  if (strengths.empty()) throw Error(Errc::invalid_argument, "at least one augmentation strength is required");
  for (double s : strengths) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(Errc::invalid_argument, "augmentation strength must lie in [0, 1]");
  }
  return run_images("augmentation", cfg, corpus, [&](int i, const RasterImage& gt, Recorder& rec) {
    const AugmentationConfig base{0.0, derive_seed(cfg.corpus_seed, {static_cast<std::uint64_t>(i), 13})};
    for (double s : strengths) {
      const AugmentationConfig aug{s, base.seed};
      const RasterImage a = augment_hsv(gt, aug);
      const std::string metric = "ssim@s=" + format_metric(s);
      for (int n : cfg.palette_sizes) {
        const IndexedImage aq = index_exact(augment_hsv(render(median_cut(gt, PaletteSpec{n})), aug));
        for (bool tex : {false, true}) {
          const ConditioningStack stack =
              build_dequant_stack(aq, PaletteSpec{n}, Variant::T, tex ? &a : nullptr, tex);
          const RasterImage out = sample(ck, stack, seeded(cfg.sampler, i, n));
          rec.add("T", n, tex, metric, ssim(out, a));
          if (n == cfg.palette_sizes.front() && s == strengths.back()) {
            if (!tex) rec.result.tiles = {a, render(aq)};
            rec.result.tiles.push_back(out);
          }
        }
      }
    }
  });
}

namespace {

std::string csv_bool(bool b) { return b ? "on" : "off"; }

RasterImage compose_sheet(const std::vector<std::vector<RasterImage>>& rows) {
  constexpr int gap = 2;
  int tile = 0, cols = 0;
  for (const auto& r : rows) {
    cols = std::max(cols, static_cast<int>(r.size()));
    for (const auto& t : r) tile = std::max({tile, t.width(), t.height()});
  }
  RasterImage sheet(std::max(1, cols * (tile + gap) + gap), std::max(1, static_cast<int>(rows.size()) * (tile + gap) + gap),
                    {255, 255, 255});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const RasterImage& t = rows[r][c];
      const int ox = gap + static_cast<int>(c) * (tile + gap), oy = gap + static_cast<int>(r) * (tile + gap);
      for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) sheet.set(ox + x, oy + y, t.at(x, y));
    }
  }
  return sheet;
}

json config_json(const ExperimentConfig& cfg) {
  json variants = json::array();
  for (Variant v : cfg.variants) variants.push_back(std::string(to_string(v)));
  json ckpts = json::object();
  for (const auto& [k, p] : cfg.checkpoints) ckpts[k] = p.string();
  return {{"corpus_dir", cfg.corpus_dir ? json(cfg.corpus_dir->string()) : json(nullptr)},
          {"corpus_seed", cfg.corpus_seed},
          {"n", cfg.n},
          {"image_size", cfg.image_size},
          {"palette_sizes", cfg.palette_sizes},
          {"variants", variants},
          {"checkpoints", ckpts},
          {"sampler",
           {{"steps", cfg.sampler.steps},
            {"thresholding_p", cfg.sampler.thresholding_p},
            {"thresholding_c", cfg.sampler.thresholding_c},
            {"seed", cfg.sampler.seed}}},
          {"workers", cfg.workers}};
}

}  // namespace

void write_results(const ResultTable& table, const ExperimentConfig& cfg,
                   const std::map<std::string, std::string>& checkpoint_hashes) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::string id = table.experiment;
  const auto per_image = cfg.output_dir / (id + "_per_image.csv");
  const auto summary = cfg.output_dir / (id + "_summary.csv");
  {
    std::ofstream out(per_image);
    if (!out) throw Error(Errc::io_error, "cannot write " + per_image.string());
    out << "experiment,variant,palette_size,texture,metric,image,value\n";
    for (const ImageValue& v : table.per_image) {
      out << id << ',' << v.variant << ',' << v.palette_size << ',' << csv_bool(v.texture) << ',' << v.metric << ','
          << v.image << ',' << format_metric(v.value) << '\n';
    }
  }
  {
    std::ofstream out(summary);
    if (!out) throw Error(Errc::io_error, "cannot write " + summary.string());
    out << "experiment,variant,palette_size,texture,metric,mean,standard_error,n\n";
    for (const ResultRow& r : table.rows) {
      out << r.experiment << ',' << r.variant << ',' << r.palette_size << ',' << csv_bool(r.texture) << ','
          << r.metric << ',' << format_metric(r.mean) << ',' << format_metric(r.standard_error) << ',' << r.n << '\n';
    }
  }
  json files = {per_image.filename().string(), summary.filename().string()};
  if (!table.contact_sheet.empty()) {
    const auto sheet = cfg.output_dir / (id + "_sheet.png");
    save_image(compose_sheet(table.contact_sheet), sheet);
    files.push_back(sheet.filename().string());
  }
  json diag = json::object();
  for (const auto& [k, v] : table.diagnostics) diag[k] = v;
  const json manifest = {{"experiment", id},
                         {"config", config_json(cfg)},
                         {"checkpoint_hashes", checkpoint_hashes},
                         {"diagnostics", diag},
                         {"files", files}};
  std::ofstream out(cfg.output_dir / (id + "_manifest.json"));
  out << manifest.dump(2) << '\n';
}

}  // namespace palettediff
