#include "pedsyn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pedsyn/checkpoint.hpp"
#include "pedsyn/error.hpp"
#include "pedsyn/kernels.hpp"
#include "pedsyn/rng.hpp"

namespace pedsyn::retrieval {

using ad::Graph;
using ad::Var;

const char* to_string(NoiseStrategyConfig::Kind k) {
  switch (k) {
    case NoiseStrategyConfig::Kind::None: return "none";
    case NoiseStrategyConfig::Kind::LabelSmoothing: return "label_smoothing";
    case NoiseStrategyConfig::Kind::GmmSplit: return "gmm_split";
    case NoiseStrategyConfig::Kind::ChannelMask: return "channel_mask";
  }
  return "?";
}

NoiseStrategyConfig::Kind strategy_from_string(const std::string& s) {
  if (s == "none") return NoiseStrategyConfig::Kind::None;
  if (s == "label_smoothing") return NoiseStrategyConfig::Kind::LabelSmoothing;
  if (s == "gmm_split") return NoiseStrategyConfig::Kind::GmmSplit;
  if (s == "channel_mask") return NoiseStrategyConfig::Kind::ChannelMask;
  throw ValidationError("unknown noise strategy: " + s);
}

// --------------------------------------------------------------- encoder --

DualEncoder::DualEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.text_vocab <= 0) throw ValidationError("encoder config needs text_vocab");
  if (cfg.temperature_init <= 0.f) throw ValidationError("temperature must be positive");
  Rng rng(mix64(cfg.init_seed, 0xD0A1ull));
  auto norm_init = [&](ad::Param& p, const std::string& name, std::vector<int> shape, float std) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.next_normal() * std;
    p = ad::Param(name, std::move(t));
  };
  norm_init(conv1_w, "img.conv1.w", {8, 3, 3, 3}, std::sqrt(2.f / 27.f));
  conv1_b = ad::Param("img.conv1.b", Tensor({8}));
  norm_init(conv2_w, "img.conv2.w", {16, 8, 3, 3}, std::sqrt(2.f / 72.f));
  conv2_b = ad::Param("img.conv2.b", Tensor({16}));
  norm_init(conv3_w, "img.conv3.w", {32, 16, 3, 3}, std::sqrt(2.f / 144.f));
  conv3_b = ad::Param("img.conv3.b", Tensor({32}));
  norm_init(img_proj_w, "img.proj.w", {cfg.embed_dim, 32}, std::sqrt(2.f / 32.f));
  img_proj_b = ad::Param("img.proj.b", Tensor({cfg.embed_dim}));

  int dt = 64, da = 32;
  norm_init(tok_emb, "txt.tok_emb", {cfg.text_vocab, dt}, 0.05f);
  norm_init(pos_emb, "txt.pos_emb", {cfg.max_text_len, dt}, 0.05f);
  norm_init(attn_q_w, "txt.attn.q.w", {da, dt}, std::sqrt(2.f / dt));
  norm_init(attn_k_w, "txt.attn.k.w", {da, dt}, std::sqrt(2.f / dt));
  norm_init(attn_v_w, "txt.attn.v.w", {da, dt}, std::sqrt(2.f / dt));
  norm_init(attn_o_w, "txt.attn.o.w", {dt, da}, std::sqrt(2.f / da));
  norm_init(txt_proj_w, "txt.proj.w", {cfg.embed_dim, dt}, std::sqrt(2.f / dt));
  txt_proj_b = ad::Param("txt.proj.b", Tensor({cfg.embed_dim}));

  // Stored as sqrt(1/temperature) so the effective scale stays positive
  // through training (scale = s^2).
  Tensor ls({1});
  ls.data[0] = std::sqrt(1.f / cfg.temperature_init);
  log_scale = ad::Param("logit_scale_sqrt", std::move(ls));
}

Var DualEncoder::encode_images(Graph& g, const Tensor& batch) {
  if (batch.ndim() != 4 || batch.dim(1) != 3)
    throw DimensionError("encode_images: need (N,3,S,S), got " + batch.shape_str());
  Var x = g.constant(batch);
  x = g.relu(g.conv3x3(x, g.param(conv1_w), g.param(conv1_b)));
  x = g.avgpool2(x);
  x = g.relu(g.conv3x3(x, g.param(conv2_w), g.param(conv2_b)));
  x = g.avgpool2(x);
  x = g.relu(g.conv3x3(x, g.param(conv3_w), g.param(conv3_b)));
  x = g.avgpool2(x);
  Var pooled = g.spatial_mean(x);  // (N,32)
  Var proj = g.linear(pooled, g.param(img_proj_w), g.param(img_proj_b));
  return g.l2norm_rows(proj);
}

Var DualEncoder::encode_texts(Graph& g, const std::vector<std::vector<int>>& tokens) {
  std::vector<Var> rows;
  rows.reserve(tokens.size());
  Var te = g.param(tok_emb);
  Var pe = g.param(pos_emb);
  float inv_sqrt = 1.f / std::sqrt(32.f);
  for (const auto& sample : tokens) {
    std::vector<int> ids = sample;
    if (ids.empty()) ids.push_back(0);
    if (static_cast<int>(ids.size()) > cfg_.max_text_len) ids.resize(static_cast<size_t>(cfg_.max_text_len));
    std::vector<int> pos(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i);
    Var h = g.add(g.embedding(te, ids), g.embedding(pe, pos));  // (T,64)
    Var q = g.linear(h, g.param(attn_q_w), Var{});
    Var k = g.linear(h, g.param(attn_k_w), Var{});
    Var v = g.linear(h, g.param(attn_v_w), Var{});
    Var a = g.softmax_rows(g.scale(g.matmul_bt(q, k), inv_sqrt));
    Var att = g.linear(g.matmul(a, v), g.param(attn_o_w), Var{});
    h = g.add(h, att);
    rows.push_back(g.mean_rows(h));  // (1,64)
  }
  Var stacked = g.concat_rows(rows);  // (N,64)
  Var proj = g.linear(stacked, g.param(txt_proj_w), g.param(txt_proj_b));
  return g.l2norm_rows(proj);
}

Var DualEncoder::logit_scale(Graph& g) {
  Var ls = g.param(log_scale);
  return g.mul(ls, ls);
}

Tensor DualEncoder::embed_images(const Tensor& batch) {
  Graph g(false);
  return g.val(encode_images(g, batch));
}

Tensor DualEncoder::embed_texts(const std::vector<std::vector<int>>& tokens) {
  Graph g(false);
  return g.val(encode_texts(g, tokens));
}

std::vector<ad::Param*> DualEncoder::parameters() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w,   &conv3_b,   &img_proj_w, &img_proj_b,
          &tok_emb, &pos_emb, &attn_q_w, &attn_k_w, &attn_v_w, &attn_o_w, &txt_proj_w, &txt_proj_b,
          &log_scale};
}

std::map<std::string, Tensor*> DualEncoder::named_tensors() {
  std::map<std::string, Tensor*> out;
  for (ad::Param* p : parameters()) out[p->name] = &p->value;
  return out;
}

void DualEncoder::save(const std::string& path) const {
  nlohmann::json cfg;
  cfg["embed_dim"] = cfg_.embed_dim;
  cfg["temperature_init"] = cfg_.temperature_init;
  cfg["max_text_len"] = cfg_.max_text_len;
  cfg["image_size"] = cfg_.image_size;
  cfg["text_vocab"] = cfg_.text_vocab;
  cfg["image_arch"] = cfg_.image_arch;
  cfg["text_arch"] = cfg_.text_arch;
  cfg["init_seed"] = cfg_.init_seed;
  auto named = const_cast<DualEncoder*>(this)->named_tensors();
  save_checkpoint(path, "retrieval", cfg, named);
}

DualEncoder DualEncoder::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "retrieval") throw ValidationError("not a retrieval checkpoint: " + path);
  EncoderConfig cfg;
  cfg.embed_dim = ckpt.config.at("embed_dim").get<int>();
  cfg.temperature_init = ckpt.config.at("temperature_init").get<float>();
  cfg.max_text_len = ckpt.config.at("max_text_len").get<int>();
  cfg.image_size = ckpt.config.at("image_size").get<int>();
  cfg.text_vocab = ckpt.config.at("text_vocab").get<int>();
  cfg.init_seed = ckpt.config.value("init_seed", 1ull);
  DualEncoder model(cfg);
  for (auto& [name, tensor] : model.named_tensors()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw ValidationError("checkpoint missing tensor " + name);
    if (it->second.shape != tensor->shape)
      throw ValidationError("checkpoint tensor shape mismatch for " + name);
    *tensor = it->second;
  }
  return model;
}

// ------------------------------------------------------------ loss pieces --

Tensor identity_targets(const std::vector<std::string>& row_ids,
                        const std::vector<std::string>& col_ids) {
  int r = static_cast<int>(row_ids.size()), c = static_cast<int>(col_ids.size());
  Tensor t({r, c});
  for (int i = 0; i < r; ++i) {
    int matches = 0;
    for (int j = 0; j < c; ++j)
      if (row_ids[static_cast<size_t>(i)] == col_ids[static_cast<size_t>(j)]) ++matches;
    if (matches == 0) throw ValidationError("identity_targets: row " + std::to_string(i) + " has no positive");
    float m = 1.f / static_cast<float>(matches);
    for (int j = 0; j < c; ++j)
      t.data[static_cast<size_t>(i) * c + j] =
          row_ids[static_cast<size_t>(i)] == col_ids[static_cast<size_t>(j)] ? m : 0.f;
  }
  return t;
}

namespace {

double ce_rows(const Tensor& logits, const Tensor& targets) {
  int n = logits.dim(0), c = logits.dim(1);
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.ptr() + static_cast<int64_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    double logz = std::log(z) + mx;
    const float* trow = targets.ptr() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j) loss -= static_cast<double>(trow[j]) * (static_cast<double>(row[j]) - logz);
  }
  return loss / n;
}

}  // namespace

float contrastive_loss(const Tensor& sim, const Tensor& targets) {
  if (sim.ndim() != 2 || sim.dim(0) != sim.dim(1)) throw DimensionError("contrastive_loss: sim must be square");
  check_same_shape(sim, targets, "contrastive_loss");
  int m = sim.dim(0);
  for (const float v : sim.data)
    if (!std::isfinite(v)) throw ValidationError("contrastive_loss: non-finite similarity");
  // Row normalization contract.
  for (int i = 0; i < m; ++i) {
    float s = 0.f;
    for (int j = 0; j < m; ++j) s += targets.data[static_cast<size_t>(i) * m + j];
    if (std::fabs(s - 1.f) > 1e-5f)
      throw ValidationError("contrastive_loss: target row " + std::to_string(i) + " not normalized");
  }
  // Text-to-image direction: transpose both and column-renormalize targets.
  Tensor sim_t({m, m}), tgt_t({m, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      sim_t.data[static_cast<size_t>(j) * m + i] = sim.data[static_cast<size_t>(i) * m + j];
      tgt_t.data[static_cast<size_t>(j) * m + i] = targets.data[static_cast<size_t>(i) * m + j];
    }
  for (int i = 0; i < m; ++i) {
    float s = 0.f;
    for (int j = 0; j < m; ++j) s += tgt_t.data[static_cast<size_t>(i) * m + j];
    if (s <= 0.f) throw ValidationError("contrastive_loss: target column " + std::to_string(i) + " empty");
    float inv = 1.f / s;
    for (int j = 0; j < m; ++j) tgt_t.data[static_cast<size_t>(i) * m + j] *= inv;
  }
  return static_cast<float>(0.5 * (ce_rows(sim, targets) + ce_rows(sim_t, tgt_t)));
}

Tensor smooth_labels(const Tensor& targets, float alpha) {
  if (alpha < 0.f || alpha >= 1.f) throw ValidationError("smoothing alpha must be in [0,1)");
  if (targets.ndim() != 2) throw DimensionError("smooth_labels: need 2-D targets");
  int m = targets.dim(1);
  Tensor out(targets.shape);
  float base = alpha / static_cast<float>(m);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = (1.f - alpha) * targets.data[i] + base;
  return out;
}

Tensor channel_mask(const Tensor& embedding, float rho, uint64_t seed) {
  if (rho < 0.f || rho >= 1.f) throw ValidationError("mask ratio must be in [0,1)");
  if (embedding.ndim() != 2 && embedding.ndim() != 1)
    throw DimensionError("channel_mask: need a vector or row matrix");
  int dim = embedding.ndim() == 1 ? embedding.dim(0) : embedding.dim(1);
  int k = static_cast<int>(rho * dim);
  Tensor out = embedding;
  if (k == 0) return out;
  // Seeded uniform k-subset via partial Fisher-Yates on channel indices.
  std::vector<int> idx(static_cast<size_t>(dim));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix64(seed, 0xC4A5ull));
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.next_below(static_cast<uint64_t>(dim - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  int rows = embedding.ndim() == 1 ? 1 : embedding.dim(0);
  for (int r = 0; r < rows; ++r)
    for (int i = 0; i < k; ++i) out.data[static_cast<size_t>(r) * dim + idx[static_cast<size_t>(i)]] = 0.f;
  return out;
}

// --------------------------------------------------------------- training --

namespace {

Tensor renorm_rows(const Tensor& x) {
  Tensor out = x;
  int n = x.dim(0), d = x.dim(1);
  for (int i = 0; i < n; ++i) {
    float s = 0.f;
    for (int j = 0; j < d; ++j) {
      float v = out.data[static_cast<size_t>(i) * d + j];
      s += v * v;
    }
    float inv = 1.f / (std::sqrt(s) + 1e-12f);
    for (int j = 0; j < d; ++j) out.data[static_cast<size_t>(i) * d + j] *= inv;
  }
  return out;
}

}  // namespace

TrainResult train(DualEncoder& model, const std::vector<TrainSample>& data, const TrainOptions& opts) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  TrainResult result;
  ad::Adam adam(opts.lr);
  auto params = model.parameters();
  Rng rng(mix64(opts.seed, 0x7127ull));

  std::vector<int> active(data.size());
  std::iota(active.begin(), active.end(), 0);

  int steps_per_epoch = std::max(1, static_cast<int>(data.size()) / opts.batch);
  int total_steps = std::max(1, opts.epochs * steps_per_epoch);
  int warmup_steps = std::max(1, static_cast<int>(opts.warmup_frac * total_steps));
  int global_step = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // GMM strategy: refit on per-sample losses and keep the clean split.
    if (opts.strategy.kind == NoiseStrategyConfig::Kind::GmmSplit &&
        epoch % std::max(1, opts.strategy.gmm_refit_period) == 0 && epoch > 0) {
      auto losses = per_sample_losses(model, data, opts.batch);
      auto split = gmm_split(losses);
      if (split.clean.empty()) {
        result.warnings.push_back("epoch " + std::to_string(epoch) +
                                  ": empty clean split, GMM strategy disabled for this epoch");
        active.assign(data.size(), 0);
        std::iota(active.begin(), active.end(), 0);
      } else {
        active = split.clean;
      }
    }
    result.clean_counts.push_back(static_cast<int>(active.size()));

    std::vector<int> order = active;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.next_below(i))]);

    double epoch_loss = 0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(opts.batch)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(opts.batch));
      if (end - at < 2) break;  // contrastive batches need >= 2 samples
      std::vector<int> batch(order.begin() + static_cast<long>(at), order.begin() + static_cast<long>(end));
      int m = static_cast<int>(batch.size());

      Tensor images({m, 3, model.config().image_size, model.config().image_size});
      std::vector<std::vector<int>> texts(static_cast<size_t>(m));
      std::vector<std::string> ids(static_cast<size_t>(m));
      int64_t img_numel = images.numel() / m;
      for (int b = 0; b < m; ++b) {
        const TrainSample& s = data[static_cast<size_t>(batch[static_cast<size_t>(b)])];
        if (s.image.numel() != img_numel) throw DimensionError("train: image size mismatch");
        std::copy(s.image.data.begin(), s.image.data.end(),
                  images.data.begin() + static_cast<int64_t>(b) * img_numel);
        texts[static_cast<size_t>(b)] = s.caption_tokens;
        ids[static_cast<size_t>(b)] = s.identity;
      }

      ad::Graph g;
      Var img_emb = model.encode_images(g, images);
      Var txt_emb = model.encode_texts(g, texts);

      if (opts.strategy.kind == NoiseStrategyConfig::Kind::ChannelMask) {
        // Independent masks for the two towers, renormalized afterwards.
        uint64_t ms = mix64(opts.seed, static_cast<uint64_t>(global_step));
        Tensor img_mask = channel_mask(Tensor::full({m, model.config().embed_dim}, 1.f),
                                       opts.strategy.rho, mix64(ms, 1));
        Tensor txt_mask = channel_mask(Tensor::full({m, model.config().embed_dim}, 1.f),
                                       opts.strategy.rho, mix64(ms, 2));
        img_emb = g.l2norm_rows(g.mul(img_emb, g.constant(std::move(img_mask))));
        txt_emb = g.l2norm_rows(g.mul(txt_emb, g.constant(std::move(txt_mask))));
      }

      Var scale = model.logit_scale(g);
      Var sim_i2t = g.mul_scalar_var(g.matmul_bt(img_emb, txt_emb), scale);
      Var sim_t2i = g.mul_scalar_var(g.matmul_bt(txt_emb, img_emb), scale);

      Tensor targets = identity_targets(ids, ids);
      if (opts.strategy.kind == NoiseStrategyConfig::Kind::LabelSmoothing)
        targets = smooth_labels(targets, opts.strategy.alpha);
      // Columns->rows for the reverse direction; identity pattern is
      // symmetric so re-deriving targets is the column renormalization.
      Tensor targets_rev = identity_targets(ids, ids);
      if (opts.strategy.kind == NoiseStrategyConfig::Kind::LabelSmoothing)
        targets_rev = smooth_labels(targets_rev, opts.strategy.alpha);

      Var loss = g.scale(g.add(g.cross_entropy_rows(sim_i2t, targets),
                               g.cross_entropy_rows(sim_t2i, targets_rev)),
                         0.5f);

      // Linear warm-up then cosine decay.
      float lr;
      if (global_step < warmup_steps) {
        float t = static_cast<float>(global_step) / warmup_steps;
        lr = opts.warmup_start_lr + t * (opts.lr - opts.warmup_start_lr);
      } else {
        float t = static_cast<float>(global_step - warmup_steps) /
                  std::max(1, total_steps - warmup_steps);
        lr = opts.lr * 0.5f * (1.f + std::cos(M_PI * std::min(1.f, t)));
      }
      adam.set_lr(lr);

      for (auto* p : params) p->zero_grad();
      g.backward(loss);
      adam.step(params);

      epoch_loss += g.val(loss).data[0];
      ++batches;
      ++global_step;
    }
    float mean_loss = batches ? static_cast<float>(epoch_loss / batches) : 0.f;
    result.epoch_losses.push_back(mean_loss);
    if (opts.progress) opts.progress(epoch, mean_loss);
  }
  return result;
}

std::vector<float> per_sample_losses(DualEncoder& model, const std::vector<TrainSample>& data,
                                     int batch) {
  std::vector<float> out(data.size(), 0.f);
  int s = model.config().image_size;
  for (size_t at = 0; at < data.size(); at += static_cast<size_t>(batch)) {
    size_t end = std::min(data.size(), at + static_cast<size_t>(batch));
    int m = static_cast<int>(end - at);
    if (m < 2) {
      for (size_t i = at; i < end; ++i) out[i] = 0.f;
      break;
    }
    Tensor images({m, 3, s, s});
    std::vector<std::vector<int>> texts(static_cast<size_t>(m));
    int64_t img_numel = images.numel() / m;
    for (int b = 0; b < m; ++b) {
      const TrainSample& sm = data[at + static_cast<size_t>(b)];
      std::copy(sm.image.data.begin(), sm.image.data.end(),
                images.data.begin() + static_cast<int64_t>(b) * img_numel);
      texts[static_cast<size_t>(b)] = sm.caption_tokens;
    }
    Tensor ie = model.embed_images(images);
    Tensor te = model.embed_texts(texts);
    // In-batch InfoNCE per sample, positives on the diagonal.
    float scale;
    {
      ad::Graph g(false);
      scale = g.val(model.logit_scale(g)).data[0];
    }
    Tensor sim({m, m});
    kern::matmul_bt(ie.ptr(), te.ptr(), sim.ptr(), m, ie.dim(1), m, kern::default_exec());
    for (auto& v : sim.data) v *= scale;
    for (int i = 0; i < m; ++i) {
      auto nll = [&](bool row_dir) {
        double mx = -1e30;
        for (int j = 0; j < m; ++j) {
          float v = row_dir ? sim.data[static_cast<size_t>(i) * m + j] : sim.data[static_cast<size_t>(j) * m + i];
          mx = std::max(mx, static_cast<double>(v));
        }
        double z = 0;
        for (int j = 0; j < m; ++j) {
          float v = row_dir ? sim.data[static_cast<size_t>(i) * m + j] : sim.data[static_cast<size_t>(j) * m + i];
          z += std::exp(static_cast<double>(v) - mx);
        }
        double pos = static_cast<double>(sim.data[static_cast<size_t>(i) * m + i]);
        return -(pos - mx - std::log(z));
      };
      out[at + static_cast<size_t>(i)] = static_cast<float>(0.5 * (nll(true) + nll(false)));
    }
  }
  return out;
}

// -------------------------------------------------------------- evaluation --

RetrievalReport evaluate(const Tensor& query_emb, const std::vector<std::string>& query_ids,
                         const Tensor& gallery_emb, const std::vector<std::string>& gallery_ids) {
  if (query_emb.ndim() != 2 || gallery_emb.ndim() != 2 || query_emb.dim(1) != gallery_emb.dim(1))
    throw DimensionError("evaluate: embedding dims disagree");
  if (query_emb.dim(0) != static_cast<int>(query_ids.size()) ||
      gallery_emb.dim(0) != static_cast<int>(gallery_ids.size()))
    throw DimensionError("evaluate: id count mismatch");
  int q = query_emb.dim(0), gcount = gallery_emb.dim(0), d = query_emb.dim(1);

  std::set<std::string> gallery_set(gallery_ids.begin(), gallery_ids.end());
  RetrievalReport rep;
  rep.n_gallery = gcount;

  double r1 = 0, r5 = 0, r10 = 0, ap_sum = 0;
  int used = 0;
  for (int i = 0; i < q; ++i) {
    const std::string& qid = query_ids[static_cast<size_t>(i)];
    if (!gallery_set.count(qid)) {
      ++rep.excluded_queries;
      continue;
    }
    std::vector<float> sims(static_cast<size_t>(gcount));
    const float* qv = query_emb.ptr() + static_cast<int64_t>(i) * d;
    for (int j = 0; j < gcount; ++j) {
      const float* gv = gallery_emb.ptr() + static_cast<int64_t>(j) * d;
      float acc = 0.f;
      for (int p = 0; p < d; ++p) acc += qv[p] * gv[p];
      sims[static_cast<size_t>(j)] = acc;
    }
    std::vector<int> order(static_cast<size_t>(gcount));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (sims[static_cast<size_t>(a)] != sims[static_cast<size_t>(b)])
        return sims[static_cast<size_t>(a)] > sims[static_cast<size_t>(b)];
      return a < b;
    });
    int relevant = 0;
    for (int j = 0; j < gcount; ++j)
      if (gallery_ids[static_cast<size_t>(j)] == qid) ++relevant;
    int hits = 0;
    double ap = 0;
    bool in1 = false, in5 = false, in10 = false;
    for (int rank = 0; rank < gcount; ++rank) {
      if (gallery_ids[static_cast<size_t>(order[static_cast<size_t>(rank)])] == qid) {
        ++hits;
        ap += static_cast<double>(hits) / (rank + 1);
        if (rank < 1) in1 = true;
        if (rank < 5) in5 = true;
        if (rank < 10) in10 = true;
      }
    }
    ap /= relevant;
    r1 += in1 ? 1 : 0;
    r5 += in5 ? 1 : 0;
    r10 += in10 ? 1 : 0;
    ap_sum += ap;
    ++used;
  }
  rep.n_queries = used;
  if (used > 0) {
    rep.rank1 = r1 / used;
    rep.rank5 = r5 / used;
    rep.rank10 = r10 / used;
    rep.mAP = ap_sum / used;
  }
  return rep;
}

nlohmann::json RetrievalReport::to_json() const {
  nlohmann::json j;
  j["rank1"] = rank1;
  j["rank5"] = rank5;
  j["rank10"] = rank10;
  j["mAP"] = mAP;
  j["n_queries"] = n_queries;
  j["n_gallery"] = n_gallery;
  if (excluded_queries) j["excluded_queries"] = excluded_queries;
  return j;
}

}  // namespace pedsyn::retrieval
