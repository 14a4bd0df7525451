#include "palettediff/service.hpp"

#include "json.hpp"
#include "palettediff/error.hpp"
#include "palettediff/transfer.hpp"
#include "palettediff/util.hpp"

// After Eigen: <resolv.h> defines an `_res` macro.
#include "httplib.h"

namespace palettediff {

using nlohmann::json;

namespace {

struct ApiError {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void bad_request(const std::string& message) { throw ApiError{400, "bad_request", message}; }

const json& field(const json& body, const char* name) {
  const auto it = body.find(name);
  if (it == body.end()) bad_request(std::string("missing field ") + name);
  return *it;
}

template <typename T>
T get_or(const json& body, const char* name, T fallback) {
  const auto it = body.find(name);
  if (it == body.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    bad_request(std::string("field ") + name + " has the wrong type");
  }
}

std::string get_string(const json& body, const char* name) {
  const json& v = field(body, name);
  if (!v.is_string()) bad_request(std::string("field ") + name + " must be a string");
  return v.get<std::string>();
}

int get_int(const json& body, const char* name) {
  const json& v = field(body, name);
  if (!v.is_number_integer()) bad_request(std::string("field ") + name + " must be an integer");
  return v.get<int>();
}

class Handler {
 public:
  Handler(const CheckpointRegistry& reg, const ServiceOptions& opts) : reg_(reg), opts_(opts) {}

  RasterImage image(const json& body, const char* name) const {
    const json& v = field(body, name);
    if (!v.is_string()) throw ApiError{400, "bad_image", std::string(name) + " must be a base64 PNG string"};
    RasterImage img(1, 1);
    try {
      img = decode_png(base64_decode(v.get<std::string>()));
    } catch (const Error& e) {
      throw ApiError{400, "bad_image", e.detail()};
    }
    if (img.width() > opts_.max_side || img.height() > opts_.max_side) {
      throw ApiError{413, "image_too_large",
                     "images are limited to " + std::to_string(opts_.max_side) + " pixels per side"};
    }
    return img;
  }

  static Palette palette(const json& body, const char* name) {
    const json& v = field(body, name);
    if (!v.is_array() || v.empty()) bad_request(std::string(name) + " must be a non-empty array of [r,g,b]");
    std::vector<Rgb> colors;
    for (const json& c : v) {
      if (!c.is_array() || c.size() != 3) bad_request(std::string(name) + " entries must be [r,g,b]");
      Rgb rgb{};
      for (std::size_t k = 0; k < 3; ++k) {
        if (!c[k].is_number_integer() || c[k].get<int>() < 0 || c[k].get<int>() > 255) {
          bad_request(std::string(name) + " channels must be integers in [0,255]");
        }
        rgb[k] = static_cast<std::uint8_t>(c[k].get<int>());
      }
      colors.push_back(rgb);
    }
    if (colors.size() > 256) bad_request(std::string(name) + " has more than 256 colors");
    return Palette(std::move(colors));
  }

  static int colors(const json& body) {
    const int n = get_int(body, "colors");
    if (n < 2 || n > 256) throw ApiError{400, "invalid_colors", "colors must lie in [2,256]"};
    return n;
  }

  static SamplerConfig sampler(const json& body) {
    SamplerConfig cfg;
    cfg.seed = get_or<std::uint64_t>(body, "seed", 0);
    cfg.steps = get_or<int>(body, "steps", cfg.steps);
    return cfg;
  }

  const Checkpoint& checkpoint(const json& body) const {
    const std::string tag = get_string(body, "variant");
    const RegistryEntry* e = reg_.find(tag);
    if (e == nullptr) throw ApiError{409, "missing_checkpoint", "no checkpoint loaded for variant " + tag};
    return *e->checkpoint;
  }

  static std::string encode(const RasterImage& img) { return base64_encode(encode_png(img)); }

  static json palette_json(const Palette& p) {
    json out = json::array();
    for (const Rgb& c : p.colors()) out.push_back({c[0], c[1], c[2]});
    return out;
  }

  json quantize(const json& body) const {
    const RasterImage img = image(body, "image");
    const int n = colors(body);
    const IndexedImage q = median_cut(img, n);
    return {{"quantized_image", encode(render(q))}, {"palette", palette_json(q.palette())}, {"colors", n}};
  }

  json transfer(const json& body) const {
    const RasterImage img = image(body, "quantized_image");
    const Palette src = palette(body, "palette");
    const Palette tgt = palette(body, "target_palette");
    if (src.size() != tgt.size()) {
      throw ApiError{400, "palette_size_mismatch",
                     "palette has " + std::to_string(src.size()) + " colors, target has " + std::to_string(tgt.size())};
    }
    const TransferMode mode = parse_transfer_mode(get_or<std::string>(body, "mode", "color"));
    std::vector<std::uint8_t> idx(static_cast<std::size_t>(img.size()));
    for (int i = 0; i < img.size(); ++i) {
      const auto& cs = src.colors();
      const auto it = std::find(cs.begin(), cs.end(), img.at(i));
      if (it == cs.end()) throw ApiError{400, "bad_image", "quantized_image has a pixel outside palette"};
      idx[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(it - cs.begin());
    }
    const IndexedImage moved = transfer_palette(IndexedImage(img.width(), img.height(), std::move(idx), src), tgt, mode);
    return {{"quantized_image", encode(render(moved))}, {"palette", palette_json(moved.palette())}};
  }

  json dequantize(const json& body) const {
    const RasterImage img = image(body, "quantized_image");
    const int n = colors(body);
    const Checkpoint& ck = checkpoint(body);
    const IndexedImage q = index_exact(img);
    if (q.palette().size() > n) {
      throw ApiError{400, "palette_size_mismatch",
                     "quantized_image has " + std::to_string(q.palette().size()) + " colors, more than colors=" +
                         std::to_string(n)};
    }
    std::optional<RasterImage> tex;
    if (body.contains("texture_image") && !body["texture_image"].is_null()) tex = image(body, "texture_image");
    DequantizeOptions opts;
    opts.texture_on = get_or<bool>(body, "texture_on", false);
    opts.l_post = get_or<bool>(body, "l_post", false);
    opts.texture_src = tex ? &*tex : nullptr;
    if ((opts.texture_on || opts.l_post) && !tex) {
      throw ApiError{400, "missing_texture", "texture_on and l_post need texture_image"};
    }
    return {{"image", encode(palettediff::dequantize(ck, q, n, opts, sampler(body)))}};
  }

  json inpaint(const json& body) const {
    const RasterImage img = image(body, "image");
    const Checkpoint& ck = checkpoint(body);
    MaskSpec mask{img.height(), img.width(), {}};
    const json& rects = field(body, "mask_rects");
    if (!rects.is_array()) bad_request("mask_rects must be an array");
    for (const json& r : rects) {
      if (r.is_array() && r.size() == 4 && std::all_of(r.begin(), r.end(), [](const json& v) { return v.is_number_integer(); })) {
        mask.rects.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
      } else if (r.is_object()) {
        mask.rects.push_back({get_int(r, "top"), get_int(r, "left"), get_int(r, "height"), get_int(r, "width")});
      } else {
        bad_request("mask_rects entries must be [top,left,height,width]");
      }
    }
    Fill fill = MeanFill{};
    const json& color = field(body, "color");
    if (color.is_string()) {
      if (color.get<std::string>() != "mean") bad_request("color must be \"mean\" or [r,g,b]");
    } else {
      fill = palette(json{{"color", json::array({color})}}, "color")[0];
    }
    InpaintOptions opts;
    opts.texture_in_mask = get_or<bool>(body, "texture_in_mask", false);
    opts.texture_on = get_or<bool>(body, "texture_on", true);
    return {{"image", encode(palettediff::inpaint(ck, img, mask, fill, opts, sampler(body)))}};
  }

  json checkpoints() const {
    json list = json::array();
    for (const auto& e : reg_.entries()) {
      list.push_back({{"variant", e.tag}, {"id", e.id}, {"image_size", e.checkpoint->config.image_size}});
    }
    return {{"checkpoints", list}};
  }

 private:
  const CheckpointRegistry& reg_;
  const ServiceOptions& opts_;
};

ApiError from_library(const Error& e) {
  switch (e.code()) {
    case Errc::decode_error: return {400, "bad_image", e.detail()};
    case Errc::size_mismatch: return {400, "palette_size_mismatch", e.detail()};
    case Errc::missing_checkpoint: return {409, "missing_checkpoint", e.detail()};
    case Errc::frozen_violation:
    case Errc::bad_checkpoint:
    case Errc::io_error: return {500, std::string(errc_name(e.code())), e.detail()};
    default: return {400, std::string(errc_name(e.code())), e.detail()};
  }
}

}  // namespace

Service::Service(std::shared_ptr<const CheckpointRegistry> registry, ServiceOptions options)
    : registry_(std::move(registry)), options_(std::move(options)) {
  if (!registry_) registry_ = std::make_shared<const CheckpointRegistry>();
}

ApiResponse Service::handle(std::string_view method, std::string_view path, std::string_view body,
                            std::string_view echo_header) const {
  json echo = echo_header.empty() ? json(nullptr) : json(std::string(echo_header));
  json out;
  int status = 200;
  try {
    const Handler h(*registry_, options_);
    json req = json::object();
    if (method == "POST") {
      try {
        req = json::parse(body);
      } catch (const json::parse_error& e) {
        bad_request(std::string("body is not valid JSON: ") + e.what());
      }
      if (!req.is_object()) bad_request("body must be a JSON object");
      if (req.contains("echo_id")) echo = req["echo_id"];
    }
    const auto route = [&](std::string_view m, std::string_view p) { return method == m && path == p; };
    if (route("POST", "/api/quantize")) {
      out = h.quantize(req);
    } else if (route("POST", "/api/transfer")) {
      out = h.transfer(req);
    } else if (route("POST", "/api/dequantize")) {
      out = h.dequantize(req);
    } else if (route("POST", "/api/inpaint")) {
      out = h.inpaint(req);
    } else if (route("GET", "/api/checkpoints")) {
      out = h.checkpoints();
    } else {
      throw ApiError{404, "not_found", "no route " + std::string(method) + " " + std::string(path)};
    }
  } catch (const ApiError& e) {
    status = e.status;
    out = {{"code", e.code}, {"message", e.message}};
  } catch (const Error& e) {
    const ApiError a = from_library(e);
    status = a.status;
    out = {{"code", a.code}, {"message", a.message}};
  } catch (const std::exception& e) {
    status = 500;
    out = {{"code", "internal"}, {"message", e.what()}};
  }
  out["echo_id"] = echo;
  return {status, out.dump()};
}

struct HttpServer::Impl {
  explicit Impl(const Service& s) : service(s) {}
  const Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  const std::string origin = service.options().cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Headers", "Content-Type, X-Echo-Id"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Expose-Headers", "X-Echo-Id"}});
  // Bodies hold base64 images; a 256x256 PNG stays far below this.
  srv.set_payload_max_length(16 * 1024 * 1024);
  const Service* svc = &impl_->service;
  auto forward = [svc](const httplib::Request& req, httplib::Response& res) {
    std::string echo = req.get_header_value("X-Echo-Id");
    if (echo.empty() && req.has_param("echo_id")) echo = req.get_param_value("echo_id");
    const ApiResponse r = svc->handle(req.method, req.path, req.body, echo);
    res.status = r.status;
    if (!echo.empty()) res.set_header("X-Echo-Id", echo);
    res.set_content(r.body, "application/json");
  };
  srv.Post(R"(/api/.*)", forward);
  srv.Get(R"(/api/.*)", forward);
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error(Errc::io_error, "cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace palettediff
