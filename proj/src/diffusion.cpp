#include "pedsyn/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "pedsyn/toy_corpus.hpp"

namespace pedsyn {

Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 0 || t > sched.steps) throw ValidationError("add_noise: step out of range");
  check_same_shape(x0, eps, "add_noise");
  float a = sched.alpha[static_cast<size_t>(t)];
  float s = sched.sigma[static_cast<size_t>(t)];
  Tensor out(x0.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x0.data[i] + s * eps.data[i];
  return out;
}

float reconstruction_loss(const Tensor& pred, const Tensor& target, float omega) {
  check_same_shape(pred, target, "reconstruction_loss");
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - target.data[i];
    acc += d * d;
  }
  return omega * static_cast<float>(acc / static_cast<double>(pred.data.size()));
}

namespace {

// Classifier-free guided prediction; controllers see the conditional pass.
Tensor guided_predict(Denoiser& model, const Tensor& x, int t, const std::vector<int>& tokens,
                      const GenOptions& opts, SampleHooks* hooks) {
  Tensor cond = model.predict(x, t, tokens, hooks);
  if (opts.guidance == 1.f) return cond;
  Tensor uncond = model.predict(x, t, opts.uncond_tokens, nullptr);
  Tensor out(cond.shape);
  float s = opts.guidance;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = uncond.data[i] + s * (cond.data[i] - uncond.data[i]);
  return out;
}

Tensor ddim_from_eps(const Tensor& x, const Tensor& eps, const NoiseSchedule& sched, int t_from,
                     int t_to) {
  float a_f = sched.alpha[static_cast<size_t>(t_from)], s_f = sched.sigma[static_cast<size_t>(t_from)];
  float a_t = sched.alpha[static_cast<size_t>(t_to)], s_t = sched.sigma[static_cast<size_t>(t_to)];
  Tensor out(x.shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    float x0 = (x.data[i] - s_f * eps.data[i]) / a_f;
    out.data[i] = a_t * x0 + s_t * eps.data[i];
  }
  return out;
}

}  // namespace

Tensor ddim_step(Denoiser& model, const NoiseSchedule& sched, const Tensor& x, int t_from, int t_to,
                 const std::vector<int>& tokens, const GenOptions& opts, int step_index) {
  if (t_from <= t_to || t_from > sched.steps || t_to < 0)
    throw ValidationError("ddim_step: bad step pair");
  SampleHooks hooks;
  hooks.controller = opts.controller;
  hooks.capture = opts.capture;
  hooks.step_index = step_index;
  Tensor eps = guided_predict(model, x, t_from, tokens, opts, &hooks);
  return ddim_from_eps(x, eps, sched, t_from, t_to);
}

Tensor denoise_step(Denoiser& model, const NoiseSchedule& sched, const Tensor& x_t, int t,
                    const std::vector<int>& tokens, AttentionController* controller) {
  if (t <= 0) throw ValidationError("denoise_step: t must be positive");
  if (t > sched.steps) throw ValidationError("denoise_step: t beyond schedule");
  GenOptions opts;
  opts.guidance = 1.f;
  opts.controller = controller;
  return ddim_step(model, sched, x_t, t, t - 1, tokens, opts, sched.steps - t);
}

Tensor sample_from_noise(Denoiser& model, const NoiseSchedule& sched, Tensor x_t,
                         const std::vector<int>& tokens, const GenOptions& opts) {
  auto idx = sched.sample_indices(opts.steps);
  Tensor x = std::move(x_t);
  for (size_t i = 0; i + 1 < idx.size(); ++i)
    x = ddim_step(model, sched, x, idx[i], idx[i + 1], tokens, opts, static_cast<int>(i));
  return x;
}

Tensor generate(Denoiser& model, const NoiseSchedule& sched, const std::vector<int>& tokens,
                uint64_t seed, const GenOptions& opts) {
  Rng rng(mix64(seed, 0x9E11ull));
  Tensor x({3, toy::kToySize, toy::kToySize});
  for (auto& v : x.data) v = rng.next_normal();
  return sample_from_noise(model, sched, std::move(x), tokens, opts);
}

InvertResult invert(Denoiser& model, const NoiseSchedule& sched, const Tensor& image,
                    const std::vector<int>& tokens, const GenOptions& opts) {
  auto idx = sched.sample_indices(opts.steps);  // descending, ends at 0
  // Walk the sub-schedule upward. Each step solves the reverse update by
  // fixed-point iteration so that the exact forward pass reproduces it.
  Tensor x = image;
  GenOptions quiet = opts;  // the inversion sweep itself is controller-free
  quiet.controller = nullptr;
  quiet.capture = nullptr;
  for (size_t i = idx.size(); i-- > 1;) {
    int t_lo = idx[i];
    int t_hi = idx[i - 1];
    float a_lo = sched.alpha[static_cast<size_t>(t_lo)], s_lo = sched.sigma[static_cast<size_t>(t_lo)];
    float a_hi = sched.alpha[static_cast<size_t>(t_hi)], s_hi = sched.sigma[static_cast<size_t>(t_hi)];
    float ratio = a_hi / a_lo;
    float coef = s_hi - ratio * s_lo;
    Tensor eps = guided_predict(model, x, t_hi, tokens, quiet, nullptr);
    Tensor x_hi(x.shape);
    for (int iter = 0; iter < std::max(1, opts.invert_iters); ++iter) {
      if (iter > 0) eps = guided_predict(model, x_hi, t_hi, tokens, quiet, nullptr);
      for (size_t j = 0; j < x_hi.data.size(); ++j)
        x_hi.data[j] = ratio * x.data[j] + coef * eps.data[j];
    }
    x = std::move(x_hi);
  }

  InvertResult res;
  res.x_t = x;
  res.reconstruction = sample_from_noise(model, sched, std::move(x), tokens, opts);
  float mx = 0.f;
  for (size_t i = 0; i < image.data.size(); ++i)
    mx = std::max(mx, std::fabs(res.reconstruction.data[i] - image.data[i]));
  res.max_abs_err = mx;
  return res;
}

// ---------------------------------------------------------------- losses --

namespace {

bool has_identifier_before_person(const std::vector<int>& tokens, int ident, int person) {
  for (size_t i = 0; i + 1 < tokens.size(); ++i)
    if (tokens[i] == ident && tokens[i + 1] == person) return true;
  return false;
}

bool contains_token(const std::vector<int>& tokens, int id) {
  return std::find(tokens.begin(), tokens.end(), id) != tokens.end();
}

float recon_term(Denoiser& model, const NoiseSchedule& sched, const std::vector<ImageTextPair>& batch,
                 Rng& rng) {
  double acc = 0.0;
  for (const auto& pair : batch) {
    int t = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(sched.steps)));
    Tensor eps(pair.image.shape);
    for (auto& v : eps.data) v = rng.next_normal();
    Tensor x_t = add_noise(pair.image, t, eps, sched);
    Tensor eps_hat = model.predict(x_t, t, pair.tokens, nullptr);
    float a = sched.alpha[static_cast<size_t>(t)], s = sched.sigma[static_cast<size_t>(t)];
    Tensor pred(pair.image.shape);
    for (size_t i = 0; i < pred.data.size(); ++i)
      pred.data[i] = (x_t.data[i] - s * eps_hat.data[i]) / a;
    acc += reconstruction_loss(pred, pair.image, sched.omega[static_cast<size_t>(t)]);
  }
  return batch.empty() ? 0.f : static_cast<float>(acc / static_cast<double>(batch.size()));
}

}  // namespace

float prior_preservation_loss(Denoiser& model, const NoiseSchedule& sched,
                              const std::vector<ImageTextPair>& batch_real,
                              const std::vector<ImageTextPair>& batch_prior, float lambda,
                              int identifier_token_id, int person_token_id, uint64_t draw_seed) {
  if (lambda < 0.f) throw ValidationError("lambda must be non-negative");
  for (const auto& p : batch_real)
    if (!has_identifier_before_person(p.tokens, identifier_token_id, person_token_id))
      throw ValidationError("subject prompt must place the identifier token before 'person'");
  for (const auto& p : batch_prior)
    if (contains_token(p.tokens, identifier_token_id))
      throw ValidationError("prior prompt must not contain the identifier token");

  Rng rng(mix64(draw_seed, 0xEC01ull));
  float real_term = recon_term(model, sched, batch_real, rng);
  float prior_term = lambda > 0.f ? recon_term(model, sched, batch_prior, rng) : 0.f;
  return real_term + lambda * prior_term;
}

// -------------------------------------------------------------- training --

namespace {

// Builds the weighted eps-space objective for one batch on the graph. The
// per-sample weight makes the scalar equal to the mean of the image-space
// reconstruction terms.
ad::Var batch_loss(ad::Graph& g, UNet& net, const NoiseSchedule& sched,
                   const std::vector<const ImageTextPair*>& batch, Rng& rng) {
  int n = static_cast<int>(batch.size());
  int hgt = batch[0]->image.dim(1), wdt = batch[0]->image.dim(2);
  int64_t img_numel = static_cast<int64_t>(3) * hgt * wdt;
  Tensor x({n, 3, hgt, wdt});
  Tensor target({n, 3, hgt, wdt});
  Tensor wmask({n, 3, hgt, wdt});
  std::vector<int> ts(static_cast<size_t>(n));
  std::vector<std::vector<int>> tokens(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& pair = *batch[static_cast<size_t>(i)];
    int t = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(sched.steps)));
    ts[static_cast<size_t>(i)] = t;
    tokens[static_cast<size_t>(i)] = pair.tokens;
    float a = sched.alpha[static_cast<size_t>(t)], s = sched.sigma[static_cast<size_t>(t)];
    float wgt = sched.omega[static_cast<size_t>(t)] * (s / a) * (s / a) /
                (static_cast<float>(img_numel) * static_cast<float>(n));
    for (int64_t j = 0; j < img_numel; ++j) {
      float e = rng.next_normal();
      size_t at = static_cast<size_t>(i) * img_numel + static_cast<size_t>(j);
      x.data[at] = a * pair.image.data[static_cast<size_t>(j)] + s * e;
      target.data[at] = e;
      wmask.data[at] = wgt;
    }
  }
  ad::Var eps_hat = net.forward(g, g.constant(std::move(x)), ts, tokens, sched.steps, nullptr);
  ad::Var diff = g.sub(eps_hat, g.constant(std::move(target)));
  return g.sum_all(g.mul(g.constant(std::move(wmask)), g.mul(diff, diff)));
}

}  // namespace

TrainCurve pretrain_toy(UNet& net, const NoiseSchedule& sched, const PretrainOptions& opts) {
  if (!opts.encode) throw ValidationError("pretrain_toy: encode callback required");
  TrainCurve curve;
  ad::Adam adam(opts.lr);
  auto params = net.parameters();
  Rng rng(mix64(opts.seed, 0x7EA1ull));
  for (int it = 0; it < opts.iterations; ++it) {
    // Fresh procedurally generated batch each step, mixed prompt forms:
    // 1/10 unconditional, half fully specified, the rest partial sentences.
    std::vector<ImageTextPair> pairs;
    std::vector<const ImageTextPair*> batch;
    pairs.reserve(static_cast<size_t>(opts.batch));
    for (int b = 0; b < opts.batch; ++b) {
      auto attrs = toy::attributes_from_seed(rng.next_u64());
      auto sample = toy::render(attrs);
      ImageTextPair pair;
      pair.image = image_to_tensor(sample.image);
      uint64_t pick = rng.next_below(10);
      if (pick == 0)
        pair.tokens = {};
      else if (pick <= 5)
        pair.tokens = opts.encode(toy::toy_prompt(attrs, 5));
      else
        pair.tokens = opts.encode(toy::toy_prompt(attrs, static_cast<int>(pick) - 6));
      pairs.push_back(std::move(pair));
    }
    for (const auto& p : pairs) batch.push_back(&p);
    ad::Graph g;
    ad::Var loss = batch_loss(g, net, sched, batch, rng);
    for (auto* p : params) p->zero_grad();
    g.backward(loss);
    adam.step(params);
    float lv = g.val(loss).data[0];
    if (it == 0) curve.initial_loss = lv;
    curve.final_loss = lv;
    if (it % opts.log_every == 0) curve.losses.push_back(lv);
    if (opts.progress) opts.progress(it, lv);
  }
  return curve;
}

TrainCurve few_shot_finetune(UNet& net, const NoiseSchedule& sched,
                             const std::vector<ImageTextPair>& real_pairs,
                             const std::vector<ImageTextPair>& prior_pool,
                             int identifier_token_id, int person_token_id,
                             const FewShotOptions& opts) {
  if (real_pairs.empty()) throw ValidationError("few_shot_finetune: no subject pairs");
  for (const auto& p : real_pairs)
    if (!has_identifier_before_person(p.tokens, identifier_token_id, person_token_id))
      throw ValidationError("subject prompt must place the identifier token before 'person'");
  for (const auto& p : prior_pool)
    if (contains_token(p.tokens, identifier_token_id))
      throw ValidationError("prior prompt must not contain the identifier token");

  TrainCurve curve;
  ad::Adam adam(opts.lr);
  auto params = net.parameters();
  Rng rng(mix64(opts.seed, 0xF5B0ull));
  for (int it = 0; it < opts.iterations; ++it) {
    const ImageTextPair& real = real_pairs[static_cast<size_t>(rng.next_below(real_pairs.size()))];
    ad::Graph g;
    ad::Var loss = batch_loss(g, net, sched, {&real}, rng);
    if (opts.lambda > 0.f && !prior_pool.empty()) {
      const ImageTextPair& prior = prior_pool[static_cast<size_t>(rng.next_below(prior_pool.size()))];
      loss = g.add(loss, g.scale(batch_loss(g, net, sched, {&prior}, rng), opts.lambda));
    }
    for (auto* p : params) p->zero_grad();
    g.backward(loss);
    adam.step(params);
    float lv = g.val(loss).data[0];
    if (it == 0) curve.initial_loss = lv;
    curve.final_loss = lv;
    if (it % opts.log_every == 0) curve.losses.push_back(lv);
    if (opts.progress) opts.progress(it, lv);
  }
  return curve;
}

TrainCurve lora_finetune(UNet& net, const NoiseSchedule& sched,
                         const std::vector<ImageTextPair>& dataset, const LoraOptions& opts) {
  if (dataset.empty()) throw ValidationError("lora_finetune: empty dataset");
  if (!net.lora_enabled()) net.enable_lora(opts.rank, opts.alpha);
  TrainCurve curve;
  ad::Adam adam(opts.lr);
  auto params = net.lora_parameters();
  if (opts.train_token_embeddings) params.push_back(&net.token_embedding());
  Rng rng(mix64(opts.seed, 0x10F7ull));
  for (int it = 0; it < opts.iterations; ++it) {
    std::vector<const ImageTextPair*> batch;
    for (int b = 0; b < opts.batch; ++b)
      batch.push_back(&dataset[static_cast<size_t>(rng.next_below(dataset.size()))]);
    ad::Graph g;
    ad::Var loss = batch_loss(g, net, sched, batch, rng);
    for (auto* p : params) p->zero_grad();
    g.backward(loss);
    adam.step(params);
    float lv = g.val(loss).data[0];
    if (it == 0) curve.initial_loss = lv;
    curve.final_loss = lv;
    if (it % opts.log_every == 0) curve.losses.push_back(lv);
    if (opts.progress) opts.progress(it, lv);
  }
  return curve;
}

std::vector<ImageTextPair> make_prior_pool(Denoiser& model, const NoiseSchedule& sched,
                                           const std::vector<int>& prompt_tokens, int count,
                                           uint64_t seed, const GenOptions& opts) {
  std::vector<ImageTextPair> pool;
  pool.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    ImageTextPair p;
    p.tokens = prompt_tokens;
    p.image = generate(model, sched, prompt_tokens, derive_seed(seed, static_cast<uint64_t>(i)), opts);
    pool.push_back(std::move(p));
  }
  return pool;
}

float eval_eq_loss(Denoiser& model, const NoiseSchedule& sched,
                   const std::vector<ImageTextPair>& real_pairs,
                   const std::vector<ImageTextPair>& prior_pairs, float lambda, uint64_t seed,
                   int draws_per_pair) {
  Rng rng(mix64(seed, 0xE7A1ull));
  double acc = 0.0;
  for (int d = 0; d < draws_per_pair; ++d) {
    acc += recon_term(model, sched, real_pairs, rng);
    if (lambda > 0.f && !prior_pairs.empty()) acc += lambda * recon_term(model, sched, prior_pairs, rng);
  }
  return static_cast<float>(acc / draws_per_pair);
}

}  // namespace pedsyn
