#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "palettediff/diffusion.hpp"
#include "palettediff/error.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'D', 'I', 'F', 'F', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

using ConstVisitor = nn::Denoiser<float>::ConstVisitor;

std::string hash_group(const nn::Denoiser<float>& model, bool control) {
  Fnv1a h;
  const ConstVisitor f = [&h](const std::string& name, const nn::Param<float>& p) {
    h.update(name);
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    h.update(shape, sizeof shape);
    h.update(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  };
  if (control) {
    model.visit_control(f);
  } else {
    model.visit_base(f);
  }
  return h.hex();
}

json meta_to_json(const TrainingMeta& m) {
  return {{"kind", m.kind},
          {"steps", m.steps},
          {"batch_size", m.batch_size},
          {"learning_rate", m.learning_rate},
          {"seed", m.seed},
          {"dequant_stacks", m.dequant_stacks},
          {"inpaint_stacks", m.inpaint_stacks},
          {"loss_curve", m.loss_curve}};
}

TrainingMeta meta_from_json(const json& j) {
  TrainingMeta m;
  m.kind = j.at("kind").get<std::string>();
  m.steps = j.at("steps").get<int>();
  m.batch_size = j.at("batch_size").get<int>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.dequant_stacks = j.at("dequant_stacks").get<long>();
  m.inpaint_stacks = j.at("inpaint_stacks").get<long>();
  m.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  return m;
}

}  // namespace

std::string Checkpoint::base_hash() const { return hash_group(model, false); }
std::string Checkpoint::control_hash() const { return hash_group(model, true); }
std::string Checkpoint::tag() const { return variant ? std::string(to_string(*variant)) : "base"; }

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json tensors = json::array();
  std::vector<const nn::Param<float>*> order;
  std::uint64_t offset = 0;
  auto add = [&](const char* group) {
    return ConstVisitor([&, group](const std::string& name, const nn::Param<float>& p) {
      tensors.push_back({{"name", name}, {"group", group}, {"rows", p.value.rows()}, {"cols", p.value.cols()},
                         {"offset", offset}});
      offset += static_cast<std::uint64_t>(p.value.size()) * sizeof(float);
      order.push_back(&p);
    });
  };
  ckpt.model.visit_base(add("base"));
  ckpt.model.visit_control(add("control"));

  const ModelConfig& c = ckpt.config;
  json manifest = {
      {"config",
       {{"image_size", c.image_size},
        {"base_channels", c.base_channels},
        {"channel_multipliers", c.channel_multipliers},
        {"cond_channels", c.cond_channels}}},
      {"variant", ckpt.variant ? json(std::string(to_string(*ckpt.variant))) : json(nullptr)},
      {"schedule", {{"kind", std::string(to_string(ckpt.schedule.kind))}, {"T", ckpt.schedule.steps}}},
      {"tensors", tensors},
      {"hashes", {{"base", ckpt.base_hash()}, {"control", ckpt.control_hash()}}},
      {"base_meta", meta_to_json(ckpt.base_meta)},
      {"control_meta", ckpt.control_meta ? meta_to_json(*ckpt.control_meta) : json(nullptr)},
  };
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : order) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * static_cast<Eigen::Index>(sizeof(float))));
  }
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_checkpoint, "no checkpoint at " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(Errc::bad_checkpoint, "not a checkpoint: " + path.string());
  }
  if (version != kVersion) throw Error(Errc::bad_checkpoint, "unsupported checkpoint version");
  if (len > (1ULL << 30)) throw Error(Errc::bad_checkpoint, "manifest too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(Errc::bad_checkpoint, "truncated manifest");
  const std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  try {
    const json m = json::parse(text);
    ModelConfig cfg;
    const json& jc = m.at("config");
    cfg.image_size = jc.at("image_size").get<int>();
    cfg.base_channels = jc.at("base_channels").get<int>();
    cfg.channel_multipliers = jc.at("channel_multipliers").get<std::vector<int>>();
    cfg.cond_channels = jc.at("cond_channels").get<int>();
    cfg.validate();

    const json& js = m.at("schedule");
    Checkpoint ck{cfg,
                  make_schedule(js.at("T").get<int>(), parse_schedule_kind(js.at("kind").get<std::string>())),
                  std::nullopt,
                  nn::Denoiser<float>(cfg, 0),
                  meta_from_json(m.at("base_meta")),
                  std::nullopt};
    if (!m.at("variant").is_null()) ck.variant = parse_variant(m.at("variant").get<std::string>());
    if (!m.at("control_meta").is_null()) ck.control_meta = meta_from_json(m.at("control_meta"));

    std::map<std::string, const json*> index;
    for (const json& t : m.at("tensors")) index[t.at("group").get<std::string>() + ":" + t.at("name").get<std::string>()] = &t;
    auto fill = [&](const char* group) {
      return nn::Denoiser<float>::Visitor([&, group](const std::string& name, nn::Param<float>& p) {
        const auto it = index.find(std::string(group) + ":" + name);
        if (it == index.end()) throw Error(Errc::bad_checkpoint, "missing tensor " + name);
        const json& t = *it->second;
        if (t.at("rows").get<Eigen::Index>() != p.value.rows() || t.at("cols").get<Eigen::Index>() != p.value.cols()) {
          throw Error(Errc::bad_checkpoint, "shape mismatch for " + name);
        }
        const auto off = t.at("offset").get<std::uint64_t>();
        const auto bytes = static_cast<std::uint64_t>(p.value.size()) * sizeof(float);
        if (off + bytes > blob.size()) throw Error(Errc::bad_checkpoint, "truncated tensor data");
        std::memcpy(p.value.data(), blob.data() + off, bytes);
      });
    };
    ck.model.visit_base(fill("base"));
    ck.model.visit_control(fill("control"));
    ck.model.zero_grad();

    const json& h = m.at("hashes");
    if (h.at("base").get<std::string>() != ck.base_hash() || h.at("control").get<std::string>() != ck.control_hash()) {
      throw Error(Errc::bad_checkpoint, "checkpoint hash mismatch");
    }
    return ck;
  } catch (const json::exception& e) {
    throw Error(Errc::bad_checkpoint, std::string("malformed manifest: ") + e.what());
  }
}

void write_loss_csv(const TrainingMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << "step,loss\n";
  out.precision(9);
  for (std::size_t i = 0; i < meta.loss_curve.size(); ++i) out << i << ',' << meta.loss_curve[i] << '\n';
}

}  // namespace palettediff
