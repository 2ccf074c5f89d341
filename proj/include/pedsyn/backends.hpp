#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedsyn/denoise.hpp"
#include "pedsyn/diffusion.hpp"
#include "pedsyn/image.hpp"
#include "pedsyn/tokenizer.hpp"
#include "pedsyn/unet.hpp"

namespace pedsyn {

// Wire schemas (JSON over HTTP POST, one endpoint per backend kind):
//   /generate  {prompt, seed, guidance_scale, steps} -> {image: b64 png, backend_id}
//   /caption   {image: b64 png, instruction, seed}   -> {caption, model_id}
//   /keypoints {image: b64 png}                      -> {instances: [{keypoints: [[name,x,y,conf],..]}], instance_count}
//   /extend    {instruction, seed}                   -> {text, model_id}

struct GenerationResult {
  Image image;
  std::string backend_id;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const std::string& prompt, uint64_t seed, float guidance_scale,
                                    int steps) = 0;
  virtual std::string id() const = 0;
};

struct CaptionResult {
  std::string caption;
  std::string model_id;
};

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual CaptionResult caption(const Image& image, const std::string& instruction, uint64_t seed) = 0;
  virtual std::string id() const = 0;
};

class KeypointBackend {
 public:
  virtual ~KeypointBackend() = default;
  virtual denoise::KeypointSet detect(const Image& image) = 0;
  virtual std::string id() const = 0;
};

class LanguageBackend {
 public:
  virtual ~LanguageBackend() = default;
  virtual std::string extend(const std::string& instruction, uint64_t seed) = 0;
  virtual std::string id() const = 0;
};

// ----------------------------------------------------------------- stubs --

// Deterministic procedural renderer: prompt+seed hash to toy attributes.
class StubGenerationBackend : public GenerationBackend {
 public:
  GenerationResult generate(const std::string& prompt, uint64_t seed, float guidance_scale,
                            int steps) override;
  std::string id() const override { return "stub-gen"; }
};

// In-process denoiser sampling; arbitrary prompts are re-expressed in the
// toy conditioning language via the same attribute hash as the stub.
class ToyDiffusionBackend : public GenerationBackend {
 public:
  ToyDiffusionBackend(std::shared_ptr<UNet> net, NoiseSchedule sched, std::shared_ptr<Vocabulary> vocab);
  GenerationResult generate(const std::string& prompt, uint64_t seed, float guidance_scale,
                            int steps) override;
  std::string id() const override { return "toy-diffusion"; }

  UNet& net() { return *net_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const Vocabulary& vocab() const { return *vocab_; }

 private:
  std::shared_ptr<UNet> net_;
  NoiseSchedule sched_;
  std::shared_ptr<Vocabulary> vocab_;
};

// Reads appearance attributes from the glyph pixels and phrases them per
// instruction kind; distinct instances give structurally distinct captions.
class StubCaptionBackend : public CaptionBackend {
 public:
  explicit StubCaptionBackend(std::string variant) : variant_(std::move(variant)) {}
  CaptionResult caption(const Image& image, const std::string& instruction, uint64_t seed) override;
  std::string id() const override { return "stub-caption-" + variant_; }

 private:
  std::string variant_;
};

// Echoes a hash of the instruction; used by wire-level tests.
class EchoCaptionBackend : public CaptionBackend {
 public:
  CaptionResult caption(const Image& image, const std::string& instruction, uint64_t seed) override;
  std::string id() const override { return "echo-caption"; }
};

// Analytic glyph keypoints.
class StubKeypointBackend : public KeypointBackend {
 public:
  denoise::KeypointSet detect(const Image& image) override;
  std::string id() const override { return "stub-keypoints"; }
};

// Deterministic prompt extension: appends seeded accessory clauses.
class StubLanguageBackend : public LanguageBackend {
 public:
  std::string extend(const std::string& instruction, uint64_t seed) override;
  std::string id() const override { return "stub-extend"; }
};

// ------------------------------------------------------------------ http --

struct HttpSettings {
  std::string url;  // http://host:port
  int timeout_ms = 5000;
  int retries = 3;
  int backoff_ms = 100;  // exponential base
};

class HttpGenerationBackend : public GenerationBackend {
 public:
  explicit HttpGenerationBackend(HttpSettings s) : settings_(std::move(s)) {}
  GenerationResult generate(const std::string& prompt, uint64_t seed, float guidance_scale,
                            int steps) override;
  std::string id() const override { return "http-gen@" + settings_.url; }

 private:
  HttpSettings settings_;
};

class HttpCaptionBackend : public CaptionBackend {
 public:
  explicit HttpCaptionBackend(HttpSettings s) : settings_(std::move(s)) {}
  CaptionResult caption(const Image& image, const std::string& instruction, uint64_t seed) override;
  std::string id() const override { return "http-caption@" + settings_.url; }

 private:
  HttpSettings settings_;
};

class HttpKeypointBackend : public KeypointBackend {
 public:
  explicit HttpKeypointBackend(HttpSettings s) : settings_(std::move(s)) {}
  denoise::KeypointSet detect(const Image& image) override;
  std::string id() const override { return "http-keypoints@" + settings_.url; }

 private:
  HttpSettings settings_;
};

class HttpLanguageBackend : public LanguageBackend {
 public:
  explicit HttpLanguageBackend(HttpSettings s) : settings_(std::move(s)) {}
  std::string extend(const std::string& instruction, uint64_t seed) override;
  std::string id() const override { return "http-extend@" + settings_.url; }

 private:
  HttpSettings settings_;
};

// -------------------------------------------------------------- registry --

struct BackendEntry {
  std::string kind = "stub";  // stub | toy | http | echo (caption only)
  HttpSettings http;
  std::string checkpoint;  // toy generation: denoiser checkpoint path
  std::string variant;     // stub caption flavor
  int max_in_flight = 4;
};

struct BackendRegistry {
  BackendEntry generation;
  std::vector<BackendEntry> caption;  // complete mode wants three
  BackendEntry keypoint;
  BackendEntry language;

  static BackendRegistry defaults();
  static BackendRegistry load(const std::string& path);
  nlohmann::json to_json() const;
};

// Resolved instances; every stage falls back to its stub.
struct BackendSet {
  std::shared_ptr<GenerationBackend> generation;
  std::vector<std::shared_ptr<CaptionBackend>> caption;
  std::shared_ptr<KeypointBackend> keypoint;
  std::shared_ptr<LanguageBackend> language;

  static BackendSet resolve(const BackendRegistry& reg, const std::string& asset_dir);
};

}  // namespace pedsyn
