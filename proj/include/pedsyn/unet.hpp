#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pedsyn/attention.hpp"
#include "pedsyn/autodiff.hpp"
#include "pedsyn/rng.hpp"
#include "pedsyn/tensor.hpp"

namespace pedsyn {

struct UNetConfig {
  int img_size = 64;
  int ch1 = 12;       // channels at the 32x32 level
  int ch2 = 24;       // channels at the 16x16 level
  int d_cond = 32;    // token embedding width
  int d_time = 32;    // timestep embedding width
  int d_attn = 16;    // attention head width
  int vocab_size = 0;
  int max_tokens = 77;
  uint64_t init_seed = 1;
};

// Hooks threaded through a sampling run (batch size 1 only).
struct SampleHooks {
  AttentionController* controller = nullptr;
  std::vector<AttentionSite>* capture = nullptr;
  int step_index = 0;
};

namespace layers {

struct Linear {
  ad::Param w, b;
  bool has_bias = true;
  // Optional low-rank adapter: w_eff = w + (alpha/rank) * lora_b * lora_a.
  bool lora_enabled = false;
  int lora_rank = 0;
  float lora_alpha = 1.f;
  ad::Param lora_a, lora_b;

  void init(const std::string& name, int out, int in, Rng& rng, bool bias = true, float gain = 1.f);
  void enable_lora(int rank, float alpha, Rng& rng);
  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(std::vector<ad::Param*>& base, std::vector<ad::Param*>& lora);
};

struct Conv3x3 {
  ad::Param w, b;
  void init(const std::string& name, int oc, int ic, Rng& rng, bool zero = false);
  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(std::vector<ad::Param*>& base);
};

struct Conv1x1 {
  ad::Param w, b;
  void init(const std::string& name, int oc, int ic, Rng& rng);
  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(std::vector<ad::Param*>& base);
};

struct GroupNorm {
  ad::Param gamma, beta;
  int groups = 4;
  void init(const std::string& name, int c, int groups_);
  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(std::vector<ad::Param*>& base);
};

}  // namespace layers

// Pixel-space conditional denoiser: stem at 64x64, residual blocks with
// cross-attention at 32x32 and 16x16, mirrored decoder. Predicts the noise
// component of the input.
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg);

  const UNetConfig& config() const { return cfg_; }

  // x (N,3,H,W); t_step and token ids per sample. Returns predicted noise.
  ad::Var forward(ad::Graph& g, ad::Var x, const std::vector<int>& t_steps,
                  const std::vector<std::vector<int>>& tokens, int schedule_steps,
                  SampleHooks* hooks = nullptr);

  // Convenience single-image inference (no grad).
  Tensor predict_eps(const Tensor& x, int t_step, const std::vector<int>& tokens,
                     int schedule_steps, SampleHooks* hooks = nullptr);

  // Base parameters (everything except adapters).
  std::vector<ad::Param*> parameters();
  // Adapter parameters only; empty until enable_lora.
  std::vector<ad::Param*> lora_parameters();
  void enable_lora(int rank, float alpha = 1.f);
  bool lora_enabled() const { return lora_on_; }

  std::map<std::string, Tensor*> named_tensors();  // includes adapters when on

  // Token embedding access (identifier fine-tuning touches single rows).
  ad::Param& token_embedding() { return tok_emb_; }

 private:
  struct ResBlock {
    layers::GroupNorm gn1, gn2;
    layers::Conv3x3 conv1, conv2;
    layers::Linear temb_proj;
    layers::Conv1x1 skip;
    bool has_skip = false;
    ad::Var forward(ad::Graph& g, ad::Var x, ad::Var temb);
    void collect(std::vector<ad::Param*>& base);
  };
  struct AttnBlock {
    layers::GroupNorm gn;
    layers::Linear wq, wk, wv, wo;
    std::string layer_id;
    int d_attn = 16;
    ad::Var forward(ad::Graph& g, ad::Var x, const std::vector<ad::Var>& conds, SampleHooks* hooks);
    void collect(std::vector<ad::Param*>& base, std::vector<ad::Param*>& lora);
  };

  ad::Var build_cond(ad::Graph& g, const std::vector<int>& tokens);
  Tensor time_embedding_base(const std::vector<int>& t_steps, int schedule_steps) const;

  UNetConfig cfg_;
  bool lora_on_ = false;

  ad::Param tok_emb_, pos_emb_;
  layers::Linear time_mlp1_, time_mlp2_;
  layers::Conv3x3 stem_;
  ResBlock enc1_, enc2_, mid_, dec1_;
  AttnBlock attn_enc1_, attn_enc2_, attn_dec1_;
  layers::Conv3x3 out_conv1_, out_conv2_;
  layers::GroupNorm out_gn_;
};

}  // namespace pedsyn
