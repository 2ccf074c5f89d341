#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pedsyn/schedule.hpp"
#include "pedsyn/tensor.hpp"
#include "pedsyn/tokenizer.hpp"
#include "pedsyn/unet.hpp"

namespace pedsyn {

// Noise-prediction model abstraction; the in-process UNet and the test
// oracles both sit behind it.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict(const Tensor& x, int t_step, const std::vector<int>& tokens,
                         SampleHooks* hooks) = 0;
};

class UNetDenoiser : public Denoiser {
 public:
  UNetDenoiser(UNet& net, int schedule_steps) : net_(net), steps_(schedule_steps) {}
  Tensor predict(const Tensor& x, int t_step, const std::vector<int>& tokens,
                 SampleHooks* hooks) override {
    return net_.predict_eps(x, t_step, tokens, steps_, hooks);
  }

 private:
  UNet& net_;
  int steps_;
};

// x_t = alpha_t * x0 + sigma_t * eps
Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// omega * mean((pred - target)^2)
float reconstruction_loss(const Tensor& pred, const Tensor& target, float omega);

struct GenOptions {
  int steps = 20;                       // sampling steps (sub-schedule of T)
  float guidance = 8.5f;                // 1 = no unconditional pass
  std::vector<int> uncond_tokens = {};  // empty = null conditioning
  AttentionController* controller = nullptr;
  std::vector<AttentionSite>* capture = nullptr;
  int invert_iters = 4;  // model calls per inversion step (1 = plain)
};

// One deterministic reverse update from schedule index t_from to t_to.
// step_index is the executed-step counter exposed to controllers.
Tensor ddim_step(Denoiser& model, const NoiseSchedule& sched, const Tensor& x, int t_from, int t_to,
                 const std::vector<int>& tokens, const GenOptions& opts, int step_index);

// Contract-level single step on the full schedule (t -> t-1, no guidance).
Tensor denoise_step(Denoiser& model, const NoiseSchedule& sched, const Tensor& x_t, int t,
                    const std::vector<int>& tokens, AttentionController* controller = nullptr);

Tensor sample_from_noise(Denoiser& model, const NoiseSchedule& sched, Tensor x_t,
                         const std::vector<int>& tokens, const GenOptions& opts);

// Fresh seeded generation from Gaussian noise.
Tensor generate(Denoiser& model, const NoiseSchedule& sched, const std::vector<int>& tokens,
                uint64_t seed, const GenOptions& opts);

// Deterministic inversion: returns the initial noise whose regeneration
// reproduces the image, plus the verification regeneration and its error.
// Hooks in opts apply to the verification pass (site capture for editing).
struct InvertResult {
  Tensor x_t;
  Tensor reconstruction;
  float max_abs_err = 0.f;
};
InvertResult invert(Denoiser& model, const NoiseSchedule& sched, const Tensor& image,
                    const std::vector<int>& tokens, const GenOptions& opts);

// ---------------------------------------------------------------- losses --

struct ImageTextPair {
  Tensor image;  // (3,H,W) in [0,1]
  std::vector<int> tokens;
};

// Two-term objective: reconstruction on subject pairs (prompts must carry
// the identifier immediately before "person") plus lambda * reconstruction
// on class-prior pairs (prompts must not contain the identifier).
float prior_preservation_loss(Denoiser& model, const NoiseSchedule& sched,
                              const std::vector<ImageTextPair>& batch_real,
                              const std::vector<ImageTextPair>& batch_prior, float lambda,
                              int identifier_token_id, int person_token_id, uint64_t draw_seed);

// -------------------------------------------------------------- training --

struct TrainCurve {
  std::vector<float> losses;  // logged every log_every steps
  float initial_loss = 0.f;
  float final_loss = 0.f;
};

struct PretrainOptions {
  int iterations = 2000;
  int batch = 4;
  float lr = 2e-3f;
  uint64_t seed = 0;
  int log_every = 50;
  // Maps prompt text to token ids (the project vocabulary's encode).
  std::function<std::vector<int>(const std::string&)> encode;
  std::function<void(int, float)> progress;
};
TrainCurve pretrain_toy(UNet& net, const NoiseSchedule& sched, const PretrainOptions& opts);

struct FewShotOptions {
  float lambda = 1.f;
  int iterations = 800;
  float lr = 5e-4f;
  uint64_t seed = 0;
  int log_every = 50;
  std::function<void(int, float)> progress;
};
// Eq-style two-term fine-tuning on a handful of subject pairs.
TrainCurve few_shot_finetune(UNet& net, const NoiseSchedule& sched,
                             const std::vector<ImageTextPair>& real_pairs,
                             const std::vector<ImageTextPair>& prior_pool,
                             int identifier_token_id, int person_token_id,
                             const FewShotOptions& opts);

struct LoraOptions {
  int rank = 6;
  float alpha = 1.f;
  int iterations = 4000;
  int batch = 4;
  float lr = 1e-2f;
  uint64_t seed = 0;
  int log_every = 50;
  bool train_token_embeddings = false;
  std::function<void(int, float)> progress;
};
// Adapter-only fine-tuning; base weights stay bit-identical unless token
// embedding training is requested.
TrainCurve lora_finetune(UNet& net, const NoiseSchedule& sched,
                         const std::vector<ImageTextPair>& dataset, const LoraOptions& opts);

// Generates the class-prior image pool from the unadapted model.
std::vector<ImageTextPair> make_prior_pool(Denoiser& model, const NoiseSchedule& sched,
                                           const std::vector<int>& prompt_tokens, int count,
                                           uint64_t seed, const GenOptions& opts);

// Fixed-draw evaluation of the two-term objective (for before/after checks).
float eval_eq_loss(Denoiser& model, const NoiseSchedule& sched,
                   const std::vector<ImageTextPair>& real_pairs,
                   const std::vector<ImageTextPair>& prior_pairs, float lambda, uint64_t seed,
                   int draws_per_pair = 4);

}  // namespace pedsyn
