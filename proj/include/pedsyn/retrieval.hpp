#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedsyn/autodiff.hpp"
#include "pedsyn/gmm.hpp"
#include "pedsyn/tensor.hpp"

namespace pedsyn::retrieval {

struct EncoderConfig {
  int embed_dim = 128;
  float temperature_init = 0.07f;
  int max_text_len = 77;
  int image_size = 224;  // desk-scale toy runs use 64
  int text_vocab = 0;
  std::string image_arch = "tiny-conv3";
  std::string text_arch = "tok-attn1";
  uint64_t init_seed = 1;
};

struct NoiseStrategyConfig {
  enum class Kind { None, LabelSmoothing, GmmSplit, ChannelMask };
  Kind kind = Kind::None;
  float alpha = 0.1f;         // label smoothing weight
  float rho = 0.25f;          // channel mask ratio
  int gmm_refit_period = 1;   // epochs between refits
};

const char* to_string(NoiseStrategyConfig::Kind k);
NoiseStrategyConfig::Kind strategy_from_string(const std::string& s);

// Small from-scratch dual encoder; both towers emit L2-normalized vectors
// in a shared space, similarity is scaled by a learned temperature.
class DualEncoder {
 public:
  explicit DualEncoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }

  ad::Var encode_images(ad::Graph& g, const Tensor& batch);  // (N,3,S,S) -> (N,D)
  ad::Var encode_texts(ad::Graph& g, const std::vector<std::vector<int>>& tokens);
  ad::Var logit_scale(ad::Graph& g);  // exp(log temperature inverse)

  Tensor embed_images(const Tensor& batch);
  Tensor embed_texts(const std::vector<std::vector<int>>& tokens);

  std::vector<ad::Param*> parameters();
  std::map<std::string, Tensor*> named_tensors();

  void save(const std::string& path) const;
  static DualEncoder load(const std::string& path);

 private:
  EncoderConfig cfg_;
  ad::Param conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, img_proj_w, img_proj_b;
  ad::Param tok_emb, pos_emb, attn_q_w, attn_k_w, attn_v_w, attn_o_w, txt_proj_w, txt_proj_b;
  ad::Param log_scale;

  friend DualEncoder;
};

// ------------------------------------------------------------ loss pieces --

// Identity-aware soft targets: row i puts equal mass on every column with a
// matching identity (the diagonal always matches).
Tensor identity_targets(const std::vector<std::string>& row_ids,
                        const std::vector<std::string>& col_ids);

// Symmetric soft-target cross-entropy over a temperature-scaled similarity
// matrix. Row targets must be row-stochastic; the text-to-image direction
// uses the column-renormalized pattern.
float contrastive_loss(const Tensor& sim, const Tensor& targets);

// (1-alpha) * targets + alpha / M
Tensor smooth_labels(const Tensor& targets, float alpha);

// Seeded uniform choice of floor(rho*dim) channels set to zero. Training
// only; evaluation never masks.
Tensor channel_mask(const Tensor& embedding, float rho, uint64_t seed);

// --------------------------------------------------------------- training --

struct TrainSample {
  Tensor image;  // (3,S,S)
  std::vector<int> caption_tokens;
  std::string identity;
};

struct TrainOptions {
  int epochs = 8;
  int batch = 64;
  float lr = 1e-3f;
  float warmup_start_lr = 1e-6f;
  float warmup_frac = 0.1f;  // linear warm-up then cosine decay
  uint64_t seed = 0;
  NoiseStrategyConfig strategy;
  std::function<void(int, float)> progress;  // epoch, mean loss
};

struct TrainResult {
  std::vector<float> epoch_losses;
  std::vector<int> clean_counts;  // per epoch when GMM strategy active
  std::vector<std::string> warnings;
};

TrainResult train(DualEncoder& model, const std::vector<TrainSample>& data, const TrainOptions& opts);

// Per-sample alignment losses for GMM splitting (deterministic batching).
std::vector<float> per_sample_losses(DualEncoder& model, const std::vector<TrainSample>& data,
                                     int batch = 64);

// -------------------------------------------------------------- evaluation --

struct RetrievalReport {
  double rank1 = 0, rank5 = 0, rank10 = 0, mAP = 0;
  int n_queries = 0, n_gallery = 0, excluded_queries = 0;
  nlohmann::json to_json() const;
};

// Ranks the gallery per query by descending similarity (ties by gallery
// index); Rank-k counts a hit when any of the top k share the query's
// identity; AP averages precision over all same-identity gallery items.
RetrievalReport evaluate(const Tensor& query_emb, const std::vector<std::string>& query_ids,
                         const Tensor& gallery_emb, const std::vector<std::string>& gallery_ids);

}  // namespace pedsyn::retrieval
