#include "pedsyn/edit_control.hpp"

#include <algorithm>
#include <cmath>

#include "pedsyn/rng.hpp"
#include "pedsyn/tokenizer.hpp"

namespace pedsyn {

// ------------------------------------------------------------- alignment --

TokenAlignment TokenAlignment::compute(const std::vector<std::string>& original,
                                       const std::vector<std::string>& edited) {
  size_t n = original.size(), m = edited.size();
  // lcs[i][j] = LCS length of original[i:], edited[j:]
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = n; i-- > 0;)
    for (size_t j = m; j-- > 0;) {
      if (original[i] == edited[j])
        lcs[i][j] = lcs[i + 1][j + 1] + 1;
      else
        lcs[i][j] = std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  TokenAlignment out;
  out.original_tokens = original;
  out.edited_tokens = edited;
  out.map.assign(m, kAdded);
  size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (original[i] == edited[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      out.map[j] = static_cast<int>(i);
      ++i;
      ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      ++i;  // skip the original token first on ties
    } else {
      ++j;
    }
  }
  return out;
}

bool TokenAlignment::is_identity() const {
  if (original_tokens.size() != edited_tokens.size()) return false;
  for (size_t j = 0; j < map.size(); ++j)
    if (map[j] != static_cast<int>(j)) return false;
  return true;
}

int TokenAlignment::added_count() const {
  int c = 0;
  for (int v : map)
    if (v == kAdded) ++c;
  return c;
}

void TokenAlignment::validate() const {
  if (map.size() != edited_tokens.size()) throw ValidationError("alignment: map size mismatch");
  int prev = -1;
  for (size_t j = 0; j < map.size(); ++j) {
    int v = map[j];
    if (v == kAdded) continue;
    if (v <= prev) throw ValidationError("alignment: mappings not strictly increasing");
    if (v >= static_cast<int>(original_tokens.size()))
      throw ValidationError("alignment: index out of range");
    if (original_tokens[static_cast<size_t>(v)] != edited_tokens[j])
      throw ValidationError("alignment: mapped tokens differ");
    prev = v;
  }
}

int TauSchedule::resolve(int total_steps) const {
  int tau;
  if (mode == Mode::FractionOfSteps) {
    if (value <= 0.0 || value > 1.0) throw ValidationError("tau fraction must be in (0,1]");
    tau = static_cast<int>(std::llround(value * total_steps));
  } else {
    tau = static_cast<int>(value);
  }
  if (tau < 0 || tau > total_steps) throw ValidationError("resolved tau out of [0, steps]");
  return tau;
}

// -------------------------------------------------------------- directives --

const char* to_string(EditMechanism m) {
  switch (m) {
    case EditMechanism::Local: return "local";
    case EditMechanism::Global: return "global";
    case EditMechanism::NonRigid: return "nonrigid";
  }
  return "?";
}

const char* to_string(EditorialObject o) {
  switch (o) {
    case EditorialObject::Background: return "background";
    case EditorialObject::Weather: return "weather";
    case EditorialObject::Style: return "style";
    case EditorialObject::Posture: return "posture";
  }
  return "?";
}

EditMechanism mechanism_for(EditorialObject o) {
  switch (o) {
    case EditorialObject::Background:
    case EditorialObject::Weather: return EditMechanism::Local;
    case EditorialObject::Style: return EditMechanism::Global;
    case EditorialObject::Posture: return EditMechanism::NonRigid;
  }
  throw ValidationError("unknown editorial object");
}

const std::vector<std::string>& editorial_descriptors(EditorialObject o) {
  static const std::vector<std::string> background = {"desert", "beach", "airport", "farm", "lake"};
  static const std::vector<std::string> weather = {"cloudy", "rainy", "foggy", "snowy"};
  static const std::vector<std::string> style = {"oil painting", "anime", "street photography",
                                                 "van gogh style", "pointillism"};
  static const std::vector<std::string> posture = {"sitting", "raising hands", "giving a thumbs up",
                                                   "running", "walking"};
  switch (o) {
    case EditorialObject::Background: return background;
    case EditorialObject::Weather: return weather;
    case EditorialObject::Style: return style;
    case EditorialObject::Posture: return posture;
  }
  throw ValidationError("unknown editorial object");
}

std::vector<std::string> edit_tokenize(const std::string& prompt) {
  return Vocabulary::split_words(prompt);
}

EditDirective build_directive(EditorialObject object, const std::string& base_caption, uint64_t seed) {
  const auto& list = editorial_descriptors(object);
  Rng rng(mix64(seed, 0xED17ull));
  std::string pick = list[static_cast<size_t>(rng.next_below(list.size()))];

  EditDirective d;
  d.object = object;
  d.mechanism = mechanism_for(object);
  d.descriptor = pick;
  switch (object) {
    case EditorialObject::Background:
      d.original_prompt = "a person in the street";
      d.edited_prompt = "a person in the " + pick;
      d.tau = {TauSchedule::Mode::FractionOfSteps, 0.8};
      break;
    case EditorialObject::Weather:
      d.original_prompt = "a person on a sunny day";
      d.edited_prompt = "a person on a " + pick + " day";
      d.tau = {TauSchedule::Mode::FractionOfSteps, 0.8};
      break;
    case EditorialObject::Style:
      if (base_caption.empty())
        throw ValidationError("style directive needs the sample's synthetic caption");
      d.original_prompt = base_caption;
      d.edited_prompt = pick + ": " + base_caption;
      d.tau = {TauSchedule::Mode::FractionOfSteps, 0.8};
      break;
    case EditorialObject::Posture:
      d.original_prompt = "a person";
      d.edited_prompt = "a person, " + pick;
      d.tau = {TauSchedule::Mode::AbsoluteStep, 4};
      break;
  }
  d.alignment = TokenAlignment::compute(edit_tokenize(d.original_prompt), edit_tokenize(d.edited_prompt));
  d.alignment.validate();
  return d;
}

nlohmann::json EditDirective::to_json() const {
  nlohmann::json j;
  j["mechanism"] = to_string(mechanism);
  j["object"] = to_string(object);
  j["original_prompt"] = original_prompt;
  j["edited_prompt"] = edited_prompt;
  j["descriptor"] = descriptor;
  j["tau"] = {{"mode", tau.mode == TauSchedule::Mode::FractionOfSteps ? "fraction" : "absolute"},
              {"value", tau.value}};
  j["alignment"] = alignment.map;
  return j;
}

EditDirective EditDirective::from_json(const nlohmann::json& j) {
  EditDirective d;
  std::string obj = j.at("object").get<std::string>();
  if (obj == "background") d.object = EditorialObject::Background;
  else if (obj == "weather") d.object = EditorialObject::Weather;
  else if (obj == "style") d.object = EditorialObject::Style;
  else if (obj == "posture") d.object = EditorialObject::Posture;
  else throw ValidationError("unknown editorial object: " + obj);
  d.mechanism = mechanism_for(d.object);
  d.original_prompt = j.at("original_prompt").get<std::string>();
  d.edited_prompt = j.at("edited_prompt").get<std::string>();
  d.descriptor = j.value("descriptor", "");
  const auto& jt = j.at("tau");
  d.tau.mode = jt.at("mode").get<std::string>() == "fraction" ? TauSchedule::Mode::FractionOfSteps
                                                              : TauSchedule::Mode::AbsoluteStep;
  d.tau.value = jt.at("value").get<double>();
  d.alignment = TokenAlignment::compute(edit_tokenize(d.original_prompt), edit_tokenize(d.edited_prompt));
  d.alignment.validate();
  return d;
}

// ------------------------------------------------------------ controllers --

SiteStore index_sites(const std::vector<AttentionSite>& sites) {
  SiteStore out;
  for (const auto& s : sites) out[s.key] = s;
  return out;
}

namespace {

const AttentionSite& site_or_throw(const SiteStore& store, const SiteKey& key) {
  auto it = store.find(key);
  if (it == store.end())
    throw DimensionError("no recorded original site for layer " + key.layer_id + " step " +
                         std::to_string(key.step_index));
  return it->second;
}

// Column-wise assembly of the map to use: added columns from the edited map,
// aligned columns from the original map; rows renormalized.
Tensor assemble_columns(const Tensor& a_hat, const Tensor& a_orig, const TokenAlignment& al,
                        std::vector<ColumnSource>* provenance) {
  int rows = a_hat.dim(0);
  int cols = a_hat.dim(1);
  if (a_orig.dim(0) != rows)
    throw DimensionError("assemble: pixel count differs between edited and original maps");
  if (static_cast<int>(al.map.size()) != cols)
    throw DimensionError("assemble: alignment does not cover the edited tokens");
  Tensor out({rows, cols});
  if (provenance) provenance->assign(static_cast<size_t>(cols), ColumnSource::Edited);
  for (int j = 0; j < cols; ++j) {
    int src = al.map[static_cast<size_t>(j)];
    if (src == TokenAlignment::kAdded) {
      for (int i = 0; i < rows; ++i)
        out.data[static_cast<size_t>(i) * cols + j] = a_hat.data[static_cast<size_t>(i) * cols + j];
    } else {
      if (src >= a_orig.dim(1)) throw DimensionError("assemble: aligned column out of range");
      for (int i = 0; i < rows; ++i)
        out.data[static_cast<size_t>(i) * cols + j] =
            a_orig.data[static_cast<size_t>(i) * a_orig.dim(1) + src];
      if (provenance) (*provenance)[static_cast<size_t>(j)] = ColumnSource::Original;
    }
  }
  for (int i = 0; i < rows; ++i) {
    float s = 0.f;
    for (int j = 0; j < cols; ++j) s += out.data[static_cast<size_t>(i) * cols + j];
    if (s <= 0.f) throw ValidationError("assemble: empty attention row after assembly");
    float inv = 1.f / s;
    for (int j = 0; j < cols; ++j) out.data[static_cast<size_t>(i) * cols + j] *= inv;
  }
  return out;
}

}  // namespace

LocalEditController::LocalEditController(const SiteStore& originals, TokenAlignment alignment, int tau,
                                         bool use_original_early)
    : originals_(originals), alignment_(std::move(alignment)), tau_(tau), flip_(use_original_early) {}

Tensor LocalEditController::on_map(const SiteKey& key, Tensor a_hat) {
  bool edited_branch = key.step_index < tau_;
  if (flip_) edited_branch = !edited_branch;
  if (edited_branch) {
    provenance_[key].assign(static_cast<size_t>(a_hat.dim(1)), ColumnSource::Edited);
    return a_hat;
  }
  const AttentionSite& orig = site_or_throw(originals_, key);
  // Equal token counts: the original map substitutes wholesale (columns line
  // up by position, replaced words inherit the original column).
  if (orig.a.dim(1) == a_hat.dim(1) && orig.a.dim(0) == a_hat.dim(0)) {
    provenance_[key].assign(static_cast<size_t>(a_hat.dim(1)), ColumnSource::Original);
    return orig.a;
  }
  std::vector<ColumnSource> prov;
  Tensor out = assemble_columns(a_hat, orig.a, alignment_, &prov);
  provenance_[key] = std::move(prov);
  return out;
}

GlobalEditController::GlobalEditController(const SiteStore& originals, TokenAlignment alignment)
    : originals_(originals), alignment_(std::move(alignment)) {}

Tensor GlobalEditController::on_map(const SiteKey& key, Tensor a_hat) {
  const AttentionSite& orig = site_or_throw(originals_, key);
  if (alignment_.map.empty()) throw ValidationError("global edit: alignment covers no tokens");
  // Identity alignment means assembly would reproduce the original map; hand
  // it back untouched to keep the branch bitwise-pure.
  if (alignment_.is_identity()) {
    if (orig.a.dim(1) != a_hat.dim(1) || orig.a.dim(0) != a_hat.dim(0))
      throw DimensionError("global edit: identity alignment but map shapes differ");
    provenance_[key].assign(static_cast<size_t>(a_hat.dim(1)), ColumnSource::Original);
    return orig.a;
  }
  std::vector<ColumnSource> prov;
  Tensor out = assemble_columns(a_hat, orig.a, alignment_, &prov);
  provenance_[key] = std::move(prov);
  return out;
}

NonRigidController::NonRigidController(const SiteStore& originals, int tau, bool use_original_early)
    : originals_(originals), tau_(tau), use_original_early_(use_original_early) {}

bool NonRigidController::override_kv(const SiteKey& key, Tensor& k, Tensor& v) {
  bool early = key.step_index < tau_;
  bool use_original = use_original_early_ ? early : !early;
  if (!use_original) return false;
  const AttentionSite& orig = site_or_throw(originals_, key);
  if (orig.k.dim(1) != k.dim(1) || orig.v.dim(1) != v.dim(1))
    throw DimensionError("non-rigid edit: embedding dims differ between passes");
  k = orig.k;
  v = orig.v;
  return true;
}

// ---------------------------------------------------------------- editing --

EditResult edit_image(Denoiser& model, const NoiseSchedule& sched, const Tensor& image,
                      const EditDirective& directive, const EditOptions& opts) {
  if (!opts.encode) throw ValidationError("edit_image: encode callback required");
  directive.alignment.validate();
  std::vector<int> tokens_orig = opts.encode(directive.original_prompt);
  std::vector<int> tokens_edit = opts.encode(directive.edited_prompt);

  // Inversion under the original prompt; the verification pass records the
  // original attention sites for the controllers.
  std::vector<AttentionSite> original_sites;
  GenOptions inv_opts = opts.gen;
  inv_opts.controller = nullptr;
  inv_opts.capture = &original_sites;
  InvertResult inv = invert(model, sched, image, tokens_orig, inv_opts);
  if (inv.max_abs_err > opts.max_invert_err)
    throw EditAbortError("edit aborted: inversion round-trip error " + std::to_string(inv.max_abs_err) +
                         " above threshold " + std::to_string(opts.max_invert_err));
  SiteStore store = index_sites(original_sites);

  int tau = directive.tau.resolve(opts.gen.steps);
  std::unique_ptr<AttentionController> controller;
  switch (directive.mechanism) {
    case EditMechanism::Local:
      controller = std::make_unique<LocalEditController>(store, directive.alignment, tau);
      break;
    case EditMechanism::Global:
      controller = std::make_unique<GlobalEditController>(store, directive.alignment);
      break;
    case EditMechanism::NonRigid:
      controller = std::make_unique<NonRigidController>(store, tau);
      break;
  }

  GenOptions edit_opts = opts.gen;
  edit_opts.controller = controller.get();
  edit_opts.capture = nullptr;
  EditResult res;
  res.image = sample_from_noise(model, sched, inv.x_t, tokens_edit, edit_opts);
  res.invert_err = inv.max_abs_err;
  res.provenance = directive.to_json();
  res.provenance["invert_err"] = inv.max_abs_err;
  res.provenance["steps"] = opts.gen.steps;
  res.provenance["guidance"] = opts.gen.guidance;
  return res;
}

}  // namespace pedsyn
