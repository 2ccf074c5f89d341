#include "pedsyn/unet.hpp"

#include <cmath>

#include "pedsyn/error.hpp"

namespace pedsyn {

using ad::Graph;
using ad::Var;

namespace layers {

void Linear::init(const std::string& name, int out, int in, Rng& rng, bool bias, float gain) {
  float std = gain * std::sqrt(2.f / static_cast<float>(in));
  Tensor wt({out, in});
  for (auto& v : wt.data) v = rng.next_normal() * std;
  w = ad::Param(name + ".w", std::move(wt));
  has_bias = bias;
  if (bias) b = ad::Param(name + ".b", Tensor({out}));
}

void Linear::enable_lora(int rank, float alpha, Rng& rng) {
  int out = w.value.dim(0), in = w.value.dim(1);
  lora_enabled = true;
  lora_rank = rank;
  lora_alpha = alpha;
  Tensor a({rank, in});
  for (auto& v : a.data) v = rng.next_normal() * 0.02f;
  lora_a = ad::Param(w.name + ".lora_a", std::move(a));
  lora_b = ad::Param(w.name + ".lora_b", Tensor({out, rank}));  // zero so adapters start inert
}

Var Linear::forward(Graph& g, Var x) {
  Var base = g.linear(x, g.param(w), has_bias ? g.param(b) : Var{});
  if (!lora_enabled) return base;
  Var down = g.linear(x, g.param(lora_a), Var{});
  Var up = g.linear(down, g.param(lora_b), Var{});
  return g.add(base, g.scale(up, lora_alpha / static_cast<float>(lora_rank)));
}

void Linear::collect(std::vector<ad::Param*>& base, std::vector<ad::Param*>& lora) {
  base.push_back(&w);
  if (has_bias) base.push_back(&b);
  if (lora_enabled) {
    lora.push_back(&lora_a);
    lora.push_back(&lora_b);
  }
}

void Conv3x3::init(const std::string& name, int oc, int ic, Rng& rng, bool zero) {
  Tensor wt({oc, ic, 3, 3});
  if (!zero) {
    float std = std::sqrt(2.f / static_cast<float>(ic * 9));
    for (auto& v : wt.data) v = rng.next_normal() * std;
  }
  w = ad::Param(name + ".w", std::move(wt));
  b = ad::Param(name + ".b", Tensor({oc}));
}

Var Conv3x3::forward(Graph& g, Var x) { return g.conv3x3(x, g.param(w), g.param(b)); }

void Conv3x3::collect(std::vector<ad::Param*>& base) {
  base.push_back(&w);
  base.push_back(&b);
}

void Conv1x1::init(const std::string& name, int oc, int ic, Rng& rng) {
  Tensor wt({oc, ic});
  float std = std::sqrt(2.f / static_cast<float>(ic));
  for (auto& v : wt.data) v = rng.next_normal() * std;
  w = ad::Param(name + ".w", std::move(wt));
  b = ad::Param(name + ".b", Tensor({oc}));
}

Var Conv1x1::forward(Graph& g, Var x) { return g.conv1x1(x, g.param(w), g.param(b)); }

void Conv1x1::collect(std::vector<ad::Param*>& base) {
  base.push_back(&w);
  base.push_back(&b);
}

void GroupNorm::init(const std::string& name, int c, int groups_) {
  groups = groups_;
  gamma = ad::Param(name + ".g", Tensor::full({c}, 1.f));
  beta = ad::Param(name + ".b", Tensor({c}));
}

Var GroupNorm::forward(Graph& g, Var x) { return g.group_norm(x, g.param(gamma), g.param(beta), groups); }

void GroupNorm::collect(std::vector<ad::Param*>& base) {
  base.push_back(&gamma);
  base.push_back(&beta);
}

}  // namespace layers

// ------------------------------------------------------------- UNet bits --

Var UNet::ResBlock::forward(Graph& g, Var x, Var temb) {
  Var h = conv1.forward(g, g.silu(gn1.forward(g, x)));
  h = g.add_nc(h, temb_proj.forward(g, temb));
  h = conv2.forward(g, g.silu(gn2.forward(g, h)));
  Var s = has_skip ? skip.forward(g, x) : x;
  return g.add(h, s);
}

void UNet::ResBlock::collect(std::vector<ad::Param*>& base) {
  gn1.collect(base);
  gn2.collect(base);
  conv1.collect(base);
  conv2.collect(base);
  std::vector<ad::Param*> dummy;
  temb_proj.collect(base, dummy);
  if (has_skip) skip.collect(base);
}

Var UNet::AttnBlock::forward(Graph& g, Var x, const std::vector<Var>& conds, SampleHooks* hooks) {
  const Tensor& xv = g.val(x);
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (static_cast<int>(conds.size()) != n) throw DimensionError("attn: cond count != batch");
  if (hooks && n != 1) throw ValidationError("attention hooks require batch size 1");
  Var hn = gn.forward(g, x);
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Var xp = g.pix(hn, i);  // (HW, C)
    Var q = wq.forward(g, xp);
    Var k = wk.forward(g, conds[static_cast<size_t>(i)]);
    Var v = wv.forward(g, conds[static_cast<size_t>(i)]);
    Var att_out;
    if (hooks) {
      SiteKey key{layer_id, hooks->step_index};
      auto res = cross_attention(g.val(q), g.val(k), g.val(v), hooks->controller, key);
      if (hooks->capture) hooks->capture->push_back(res.site);
      att_out = g.constant(std::move(res.output));
    } else {
      Var logits = g.scale(g.matmul_bt(q, k), 1.f / std::sqrt(static_cast<float>(d_attn)));
      Var a = g.softmax_rows(logits);
      att_out = g.matmul(a, v);
    }
    outs.push_back(wo.forward(g, att_out));
  }
  return g.add(x, g.unpix(outs, c, h, w));
}

void UNet::AttnBlock::collect(std::vector<ad::Param*>& base, std::vector<ad::Param*>& lora) {
  gn.collect(base);
  wq.collect(base, lora);
  wk.collect(base, lora);
  wv.collect(base, lora);
  wo.collect(base, lora);
}

// ------------------------------------------------------------------ UNet --

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size <= 0) throw ValidationError("UNet needs a vocabulary size");
  Rng rng(mix64(cfg.init_seed, 0xCAFEull));

  Tensor te({cfg.vocab_size, cfg.d_cond});
  for (auto& v : te.data) v = rng.next_normal() * 0.05f;
  tok_emb_ = ad::Param("cond.tok_emb", std::move(te));
  Tensor pe({cfg.max_tokens, cfg.d_cond});
  for (auto& v : pe.data) v = rng.next_normal() * 0.05f;
  pos_emb_ = ad::Param("cond.pos_emb", std::move(pe));

  time_mlp1_.init("time.mlp1", cfg.d_time, cfg.d_time, rng);
  time_mlp2_.init("time.mlp2", cfg.d_time, cfg.d_time, rng);

  int c1 = cfg.ch1, c2 = cfg.ch2;
  stem_.init("stem", c1, 3, rng);

  auto init_res = [&](ResBlock& rb, const std::string& name, int cin, int cout) {
    rb.gn1.init(name + ".gn1", cin, std::gcd(4, cin));
    rb.conv1.init(name + ".conv1", cout, cin, rng);
    rb.temb_proj.init(name + ".temb", cout, cfg.d_time, rng);
    rb.gn2.init(name + ".gn2", cout, std::gcd(4, cout));
    rb.conv2.init(name + ".conv2", cout, cout, rng);
    rb.has_skip = cin != cout;
    if (rb.has_skip) rb.skip.init(name + ".skip", cout, cin, rng);
  };
  init_res(enc1_, "enc1", c1, c1);
  init_res(enc2_, "enc2", c1, c2);
  init_res(mid_, "mid", c2, c2);
  init_res(dec1_, "dec1", c2 + c1, c1);

  auto init_attn = [&](AttnBlock& ab, const std::string& name, int c) {
    ab.layer_id = name;
    ab.d_attn = cfg.d_attn;
    ab.gn.init(name + ".gn", c, std::gcd(4, c));
    ab.wq.init(name + ".wq", cfg.d_attn, c, rng);
    ab.wk.init(name + ".wk", cfg.d_attn, cfg.d_cond, rng);
    ab.wv.init(name + ".wv", cfg.d_attn, cfg.d_cond, rng);
    ab.wo.init(name + ".wo", c, cfg.d_attn, rng, true, 0.2f);
  };
  init_attn(attn_enc1_, "down32.attn", c1);
  init_attn(attn_enc2_, "down16.attn", c2);
  init_attn(attn_dec1_, "up32.attn", c1);

  out_conv1_.init("out.conv1", c1, 2 * c1, rng);
  out_gn_.init("out.gn", c1, std::gcd(4, c1));
  out_conv2_.init("out.conv2", 3, c1, rng, /*zero=*/true);
}

void UNet::enable_lora(int rank, float alpha) {
  if (rank < 1) throw ValidationError("adapter rank must be >= 1");
  if (lora_on_) throw ValidationError("adapters already enabled");
  Rng rng(mix64(cfg_.init_seed, 0x10AAull));
  for (AttnBlock* ab : {&attn_enc1_, &attn_enc2_, &attn_dec1_}) {
    ab->wq.enable_lora(rank, alpha, rng);
    ab->wk.enable_lora(rank, alpha, rng);
    ab->wv.enable_lora(rank, alpha, rng);
    ab->wo.enable_lora(rank, alpha, rng);
  }
  lora_on_ = true;
}

Tensor UNet::time_embedding_base(const std::vector<int>& t_steps, int schedule_steps) const {
  int n = static_cast<int>(t_steps.size());
  int d = cfg_.d_time;
  int half = d / 2;
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    double tv = static_cast<double>(t_steps[static_cast<size_t>(i)]) / schedule_steps * 1000.0;
    for (int j = 0; j < half; ++j) {
      double freq = std::exp(-std::log(10000.0) * j / half);
      out.data[static_cast<size_t>(i) * d + 2 * j] = static_cast<float>(std::sin(tv * freq));
      out.data[static_cast<size_t>(i) * d + 2 * j + 1] = static_cast<float>(std::cos(tv * freq));
    }
  }
  return out;
}

Var UNet::build_cond(Graph& g, const std::vector<int>& tokens) {
  std::vector<int> ids = tokens;
  if (ids.empty()) ids.push_back(cfg_.vocab_size - 1);  // <null> sits at the end
  if (static_cast<int>(ids.size()) > cfg_.max_tokens) ids.resize(static_cast<size_t>(cfg_.max_tokens));
  std::vector<int> pos(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i);
  Var te = g.embedding(g.param(tok_emb_), ids);
  Var pe = g.embedding(g.param(pos_emb_), pos);
  return g.add(te, pe);
}

Var UNet::forward(Graph& g, Var x, const std::vector<int>& t_steps,
                  const std::vector<std::vector<int>>& tokens, int schedule_steps, SampleHooks* hooks) {
  const Tensor& xv = g.val(x);
  int n = xv.dim(0);
  if (static_cast<int>(t_steps.size()) != n || static_cast<int>(tokens.size()) != n)
    throw DimensionError("forward: batch size mismatch");

  Var temb = g.constant(time_embedding_base(t_steps, schedule_steps));
  temb = time_mlp2_.forward(g, g.silu(time_mlp1_.forward(g, temb)));

  std::vector<Var> conds;
  conds.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) conds.push_back(build_cond(g, tokens[static_cast<size_t>(i)]));

  Var s0 = stem_.forward(g, x);              // (N,c1,64,64)
  Var d0 = g.avgpool2(s0);                   // 32x32
  Var e1 = enc1_.forward(g, d0, temb);
  e1 = attn_enc1_.forward(g, e1, conds, hooks);
  Var d1 = g.avgpool2(e1);                   // 16x16
  Var e2 = enc2_.forward(g, d1, temb);
  e2 = attn_enc2_.forward(g, e2, conds, hooks);
  Var m = mid_.forward(g, e2, temb);
  Var u1 = g.upsample2(m);                   // 32x32
  u1 = g.concat_ch(u1, e1);
  u1 = dec1_.forward(g, u1, temb);
  u1 = attn_dec1_.forward(g, u1, conds, hooks);
  Var u0 = g.upsample2(u1);                  // 64x64
  u0 = g.concat_ch(u0, s0);
  Var out = out_conv1_.forward(g, u0);
  out = g.silu(out_gn_.forward(g, out));
  return out_conv2_.forward(g, out);
}

Tensor UNet::predict_eps(const Tensor& x, int t_step, const std::vector<int>& tokens,
                         int schedule_steps, SampleHooks* hooks) {
  Graph g(/*grad=*/false);
  Tensor batched({1, x.dim(0), x.dim(1), x.dim(2)}, x.data);
  Var out = forward(g, g.constant(std::move(batched)), {t_step}, {tokens}, schedule_steps, hooks);
  const Tensor& ov = g.val(out);
  return Tensor({ov.dim(1), ov.dim(2), ov.dim(3)}, ov.data);
}

std::vector<ad::Param*> UNet::parameters() {
  std::vector<ad::Param*> base, lora;
  base.push_back(&tok_emb_);
  base.push_back(&pos_emb_);
  time_mlp1_.collect(base, lora);
  time_mlp2_.collect(base, lora);
  stem_.collect(base);
  enc1_.collect(base);
  enc2_.collect(base);
  mid_.collect(base);
  dec1_.collect(base);
  attn_enc1_.collect(base, lora);
  attn_enc2_.collect(base, lora);
  attn_dec1_.collect(base, lora);
  out_conv1_.collect(base);
  out_gn_.collect(base);
  out_conv2_.collect(base);
  return base;
}

std::vector<ad::Param*> UNet::lora_parameters() {
  std::vector<ad::Param*> base, lora;
  attn_enc1_.collect(base, lora);
  attn_enc2_.collect(base, lora);
  attn_dec1_.collect(base, lora);
  return lora;
}

std::map<std::string, Tensor*> UNet::named_tensors() {
  std::map<std::string, Tensor*> out;
  for (ad::Param* p : parameters()) out[p->name] = &p->value;
  for (ad::Param* p : lora_parameters()) out[p->name] = &p->value;
  return out;
}

}  // namespace pedsyn
