#include "pedsyn/backends.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "pedsyn/checkpoint.hpp"
#include "pedsyn/error.hpp"
#include "pedsyn/toy_corpus.hpp"

namespace pedsyn {

namespace {

toy::ToyAttributes attrs_from_prompt(const std::string& prompt, uint64_t seed) {
  return toy::attributes_from_seed(mix64(fnv1a64(prompt), seed));
}

}  // namespace

// ------------------------------------------------------------------ stubs --

GenerationResult StubGenerationBackend::generate(const std::string& prompt, uint64_t seed,
                                                 float /*guidance_scale*/, int /*steps*/) {
  auto sample = toy::render(attrs_from_prompt(prompt, seed));
  return {std::move(sample.image), id()};
}

ToyDiffusionBackend::ToyDiffusionBackend(std::shared_ptr<UNet> net, NoiseSchedule sched,
                                         std::shared_ptr<Vocabulary> vocab)
    : net_(std::move(net)), sched_(std::move(sched)), vocab_(std::move(vocab)) {
  sched_.validate();
}

GenerationResult ToyDiffusionBackend::generate(const std::string& prompt, uint64_t seed,
                                               float guidance_scale, int steps) {
  // The toy conditioning language is small; arbitrary prompts map onto it
  // through the same deterministic attribute hash the stub renderer uses.
  auto attrs = attrs_from_prompt(prompt, seed);
  std::string toy_text = toy::toy_prompt(attrs, 5);
  UNetDenoiser den(*net_, sched_.steps);
  GenOptions opts;
  opts.steps = steps;
  opts.guidance = guidance_scale;
  Tensor img = pedsyn::generate(den, sched_, vocab_->encode(toy_text), seed, opts);
  return {tensor_to_image(img), id()};
}

CaptionResult StubCaptionBackend::caption(const Image& image, const std::string& instruction,
                                          uint64_t seed) {
  auto attrs = toy::read_attributes(image);
  if (!attrs.ok) return {"A person.", id()};
  bool constant = instruction.rfind("Don't mention", 0) == 0;
  if (constant) {
    return {"A person with " + attrs.hair + " hair, wearing a " + attrs.shirt +
                " top with long sleeves, " + attrs.pants + " trousers and " + attrs.shoes + " shoes.",
            id()};
  }
  // Structural variants keyed by backend instance, instruction and seed.
  uint64_t h = mix64(mix64(fnv1a64(instruction), fnv1a64(variant_)), seed);
  switch (h % 4) {
    case 0:
      return {"The person wears a " + attrs.shirt + " top, " + attrs.pants + " trousers and " +
                  attrs.shoes + " shoes, and has " + attrs.hair + " hair.",
              id()};
    case 1:
      return {"A person dressed in a " + attrs.shirt + " shirt and " + attrs.pants + " pants, with " +
                  attrs.hair + " hair and " + attrs.shoes + " footwear.",
              id()};
    case 2:
      return {"Wearing a " + attrs.shirt + " top and " + attrs.pants + " bottoms, this person has " +
                  attrs.hair + " hair and " + attrs.shoes + " shoes.",
              id()};
    default:
      return {"This person has " + attrs.hair + " hair and wears a " + attrs.shirt + " shirt, " +
                  attrs.pants + " trousers and " + attrs.shoes + " shoes.",
              id()};
  }
}

CaptionResult EchoCaptionBackend::caption(const Image& image, const std::string& instruction,
                                          uint64_t seed) {
  std::string h = sha256_hex(instruction + "#" + std::to_string(seed) + "#" +
                             std::to_string(image.width * image.height));
  return {"echo:" + h.substr(0, 16), id()};
}

denoise::KeypointSet StubKeypointBackend::detect(const Image& image) {
  auto analysis = toy::analyze_glyphs(image);
  denoise::KeypointSet out;
  out.instance_count = analysis.instance_count;
  if (!analysis.instances.empty()) {
    for (const auto& k : analysis.instances.front().keypoints)
      out.keypoints.push_back({k.name, k.x, k.y, k.confidence});
  }
  return out;
}

std::string StubLanguageBackend::extend(const std::string& instruction, uint64_t seed) {
  // Pull the primary prompt out of the extension instruction.
  std::string primary;
  const std::string marker = "This is input: ";
  size_t at = instruction.find(marker);
  if (at != std::string::npos) {
    size_t start = at + marker.size();
    size_t end = instruction.find(", You can", start);
    primary = instruction.substr(start, end == std::string::npos ? std::string::npos : end - start);
  }
  if (!primary.empty() && primary.back() == '.') primary.pop_back();

  static const std::vector<std::string> wardrobe = {
      "a light jacket", "a woolen scarf",   "a canvas belt",  "a silver watch",
      "a baseball cap", "a pair of gloves", "a leather bag",  "round glasses"};
  static const std::vector<std::string> settings = {
      "under a clear sky",      "on a quiet afternoon", "in soft morning light",
      "against a busy backdrop", "during a light breeze", "at the edge of a crowd"};
  Rng rng(mix64(fnv1a64(instruction), seed));
  std::string acc1 = wardrobe[static_cast<size_t>(rng.next_below(wardrobe.size()))];
  std::string acc2 = wardrobe[static_cast<size_t>(rng.next_below(wardrobe.size()))];
  std::string scene = settings[static_cast<size_t>(rng.next_below(settings.size()))];
  std::string out = primary + ", wearing " + acc1;
  if (acc2 != acc1) out += " and " + acc2;
  out += ", " + scene + ".";
  return out;
}

// ------------------------------------------------------------------- http --

namespace {

nlohmann::json http_post_json(const HttpSettings& s, const std::string& path,
                              const nlohmann::json& body) {
  std::string err;
  int delay = s.backoff_ms;
  for (int attempt = 0; attempt < std::max(1, s.retries); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    httplib::Client cli(s.url);
    cli.set_connection_timeout(0, s.timeout_ms * 1000);
    cli.set_read_timeout(s.timeout_ms / 1000, (s.timeout_ms % 1000) * 1000);
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res) {
      err = "connection failed";
      continue;
    }
    if (res->status != 200) {
      err = "http " + std::to_string(res->status);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      err = std::string("bad json: ") + e.what();
    }
  }
  throw BackendError("backend " + s.url + path + " failed after retries: " + err);
}

std::string image_b64(const Image& img) { return base64_encode(png_encode(img)); }

}  // namespace

GenerationResult HttpGenerationBackend::generate(const std::string& prompt, uint64_t seed,
                                                 float guidance_scale, int steps) {
  nlohmann::json req;
  req["prompt"] = prompt;
  req["seed"] = seed;
  req["guidance_scale"] = guidance_scale;
  req["steps"] = steps;
  nlohmann::json res = http_post_json(settings_, "/generate", req);
  GenerationResult out;
  out.image = png_decode(base64_decode(res.at("image").get<std::string>()));
  out.backend_id = res.value("backend_id", id());
  return out;
}

CaptionResult HttpCaptionBackend::caption(const Image& image, const std::string& instruction,
                                          uint64_t seed) {
  nlohmann::json req;
  req["image"] = image_b64(image);
  req["instruction"] = instruction;
  req["seed"] = seed;
  nlohmann::json res = http_post_json(settings_, "/caption", req);
  return {res.at("caption").get<std::string>(), res.value("model_id", id())};
}

denoise::KeypointSet HttpKeypointBackend::detect(const Image& image) {
  nlohmann::json req;
  req["image"] = image_b64(image);
  nlohmann::json res = http_post_json(settings_, "/keypoints", req);
  return denoise::KeypointSet::from_json(res);
}

std::string HttpLanguageBackend::extend(const std::string& instruction, uint64_t seed) {
  nlohmann::json req;
  req["instruction"] = instruction;
  req["seed"] = seed;
  nlohmann::json res = http_post_json(settings_, "/extend", req);
  return res.at("text").get<std::string>();
}

// --------------------------------------------------------------- registry --

BackendRegistry BackendRegistry::defaults() {
  BackendRegistry r;
  r.generation.kind = "stub";
  r.caption = {BackendEntry{"stub", {}, "", "a", 4}, BackendEntry{"stub", {}, "", "b", 4},
               BackendEntry{"stub", {}, "", "c", 4}};
  r.keypoint.kind = "stub";
  r.language.kind = "stub";
  return r;
}

namespace {

BackendEntry entry_from_json(const nlohmann::json& j) {
  BackendEntry e;
  e.kind = j.value("kind", "stub");
  if (j.contains("url")) e.http.url = j["url"].get<std::string>();
  e.http.timeout_ms = j.value("timeout_ms", 5000);
  e.http.retries = j.value("retries", 3);
  e.http.backoff_ms = j.value("backoff_ms", 100);
  e.checkpoint = j.value("checkpoint", "");
  e.variant = j.value("variant", "");
  e.max_in_flight = j.value("max_in_flight", 4);
  return e;
}

nlohmann::json entry_to_json(const BackendEntry& e) {
  nlohmann::json j;
  j["kind"] = e.kind;
  if (!e.http.url.empty()) j["url"] = e.http.url;
  j["timeout_ms"] = e.http.timeout_ms;
  j["retries"] = e.http.retries;
  j["backoff_ms"] = e.http.backoff_ms;
  if (!e.checkpoint.empty()) j["checkpoint"] = e.checkpoint;
  if (!e.variant.empty()) j["variant"] = e.variant;
  j["max_in_flight"] = e.max_in_flight;
  return j;
}

}  // namespace

BackendRegistry BackendRegistry::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open backend registry: " + path);
  nlohmann::json j;
  f >> j;
  BackendRegistry r = defaults();
  if (j.contains("generation")) r.generation = entry_from_json(j["generation"]);
  if (j.contains("caption")) {
    r.caption.clear();
    for (const auto& e : j["caption"]) r.caption.push_back(entry_from_json(e));
  }
  if (j.contains("keypoint")) r.keypoint = entry_from_json(j["keypoint"]);
  if (j.contains("language")) r.language = entry_from_json(j["language"]);
  return r;
}

nlohmann::json BackendRegistry::to_json() const {
  nlohmann::json j;
  j["generation"] = entry_to_json(generation);
  nlohmann::json caps = nlohmann::json::array();
  for (const auto& c : caption) caps.push_back(entry_to_json(c));
  j["caption"] = caps;
  j["keypoint"] = entry_to_json(keypoint);
  j["language"] = entry_to_json(language);
  return j;
}

BackendSet BackendSet::resolve(const BackendRegistry& reg, const std::string& asset_dir) {
  BackendSet set;

  if (reg.generation.kind == "http") {
    set.generation = std::make_shared<HttpGenerationBackend>(reg.generation.http);
  } else if (reg.generation.kind == "toy") {
    if (reg.generation.checkpoint.empty())
      throw ValidationError("toy generation backend needs a checkpoint path");
    Checkpoint ckpt = load_checkpoint(reg.generation.checkpoint);
    if (ckpt.kind != "diffusion") throw ValidationError("not a denoiser checkpoint");
    UNetConfig cfg;
    cfg.img_size = ckpt.config.at("img_size").get<int>();
    cfg.ch1 = ckpt.config.at("ch1").get<int>();
    cfg.ch2 = ckpt.config.at("ch2").get<int>();
    cfg.d_cond = ckpt.config.at("d_cond").get<int>();
    cfg.d_time = ckpt.config.at("d_time").get<int>();
    cfg.d_attn = ckpt.config.at("d_attn").get<int>();
    cfg.vocab_size = ckpt.config.at("vocab_size").get<int>();
    cfg.max_tokens = ckpt.config.at("max_tokens").get<int>();
    auto net = std::make_shared<UNet>(cfg);
    if (ckpt.config.value("lora_rank", 0) > 0)
      net->enable_lora(ckpt.config["lora_rank"].get<int>(), ckpt.config.value("lora_alpha", 1.f));
    for (auto& [name, tensor] : net->named_tensors()) {
      auto it = ckpt.tensors.find(name);
      if (it == ckpt.tensors.end()) throw ValidationError("denoiser checkpoint missing " + name);
      *tensor = it->second;
    }
    auto vocab = std::make_shared<Vocabulary>(Vocabulary::load_json(asset_dir + "/toy_vocab.json"));
    set.generation = std::make_shared<ToyDiffusionBackend>(net, schedule_from(ckpt), vocab);
  } else {
    set.generation = std::make_shared<StubGenerationBackend>();
  }

  std::vector<BackendEntry> caps = reg.caption;
  if (caps.empty()) caps = BackendRegistry::defaults().caption;
  const char* default_variants[] = {"a", "b", "c"};
  int vi = 0;
  for (const auto& c : caps) {
    if (c.kind == "http")
      set.caption.push_back(std::make_shared<HttpCaptionBackend>(c.http));
    else if (c.kind == "echo")
      set.caption.push_back(std::make_shared<EchoCaptionBackend>());
    else
      set.caption.push_back(std::make_shared<StubCaptionBackend>(
          c.variant.empty() ? default_variants[vi % 3] : c.variant));
    ++vi;
  }

  if (reg.keypoint.kind == "http")
    set.keypoint = std::make_shared<HttpKeypointBackend>(reg.keypoint.http);
  else
    set.keypoint = std::make_shared<StubKeypointBackend>();

  if (reg.language.kind == "http")
    set.language = std::make_shared<HttpLanguageBackend>(reg.language.http);
  else
    set.language = std::make_shared<StubLanguageBackend>();

  return set;
}

}  // namespace pedsyn
