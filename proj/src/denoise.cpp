#include "pedsyn/denoise.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "pedsyn/error.hpp"

namespace pedsyn::denoise {

nlohmann::json KeypointSet::to_json() const {
  nlohmann::json inst = nlohmann::json::array();
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& k : keypoints) pts.push_back({k.name, k.x, k.y, k.confidence});
  inst.push_back({{"keypoints", pts}});
  nlohmann::json j;
  j["instances"] = inst;
  j["instance_count"] = instance_count;
  return j;
}

KeypointSet KeypointSet::from_json(const nlohmann::json& j) {
  KeypointSet out;
  if (!j.contains("instances") || !j["instances"].is_array())
    throw ValidationError("keypoint payload: missing instances array");
  out.instance_count = j.value("instance_count", static_cast<int>(j["instances"].size()));
  for (const auto& inst : j["instances"]) {
    for (const auto& p : inst.at("keypoints")) {
      if (!p.is_array() || p.size() != 4) throw ValidationError("keypoint payload: malformed keypoint");
      Keypoint k;
      k.name = p[0].get<std::string>();
      k.x = p[1].get<float>();
      k.y = p[2].get<float>();
      k.confidence = p[3].get<float>();
      out.keypoints.push_back(std::move(k));
    }
    break;  // verdicts look at the first instance; the count covers the rest
  }
  return out;
}

nlohmann::json NoiseVerdict::to_json() const {
  nlohmann::json j;
  j["accepted"] = accepted;
  j["reasons"] = reasons;
  j["rule_version"] = rule_version;
  return j;
}

namespace {

struct GroupDef {
  const char* reason;
  std::vector<const char*> members;
};

const std::vector<GroupDef>& required_groups() {
  static const std::vector<GroupDef> g = {
      {"incomplete:head", {"nose", "left_eye", "right_eye", "left_ear", "right_ear"}},
      {"incomplete:torso", {"left_shoulder", "right_shoulder", "left_hip", "right_hip"}},
      {"incomplete:legs", {"left_knee", "left_ankle"}},
      {"incomplete:legs", {"right_knee", "right_ankle"}},
  };
  return g;
}

const Keypoint* best_named(const std::vector<Keypoint>& kps, const std::string& name) {
  const Keypoint* best = nullptr;
  for (const auto& k : kps)
    if (k.name == name && (!best || k.confidence > best->confidence)) best = &k;
  return best;
}

}  // namespace

NoiseVerdict image_verdict(const KeypointSet& kps, const ImageRules& rules) {
  if (kps.instance_count < 0) throw ValidationError("keypoint payload: negative instance count");
  for (const auto& k : kps.keypoints) {
    if (k.name.empty()) throw ValidationError("keypoint payload: unnamed keypoint");
    if (k.confidence < 0.f || k.confidence > 1.f)
      throw ValidationError("keypoint payload: confidence out of [0,1]");
  }

  NoiseVerdict v;
  v.rule_version = rules.version;
  auto reject = [&](const std::string& reason) {
    if (std::find(v.reasons.begin(), v.reasons.end(), reason) == v.reasons.end())
      v.reasons.push_back(reason);
  };

  if (rules.check_completeness) {
    for (const auto& g : required_groups()) {
      bool any = false;
      for (const char* m : g.members) {
        const Keypoint* k = best_named(kps.keypoints, m);
        if (k && k->confidence >= rules.confidence_threshold) {
          any = true;
          break;
        }
      }
      if (!any) reject(g.reason);
    }
  }

  if (rules.check_rationality) {
    if (kps.instance_count > 1) reject("irrational:multi-person");
    if (kps.instance_count == 0) reject("irrational:no-person");

    // Duplicated confident part within one instance.
    std::map<std::string, int> confident;
    for (const auto& k : kps.keypoints)
      if (k.confidence >= rules.confidence_threshold) ++confident[k.name];
    for (const auto& [name, count] : confident)
      if (count > 1) reject("irrational:duplicate-part");

    // Bone-length ratio: legs vs torso, only when everything involved is
    // confident (incompleteness is flagged separately).
    auto conf_pt = [&](const char* name) -> const Keypoint* {
      const Keypoint* k = best_named(kps.keypoints, name);
      return (k && k->confidence >= rules.confidence_threshold) ? k : nullptr;
    };
    const Keypoint* ls = conf_pt("left_shoulder");
    const Keypoint* rs = conf_pt("right_shoulder");
    const Keypoint* lh = conf_pt("left_hip");
    const Keypoint* rh = conf_pt("right_hip");
    const Keypoint* la = conf_pt("left_ankle");
    const Keypoint* ra = conf_pt("right_ankle");
    if (ls && rs && lh && rh && (la || ra)) {
      float sx = (ls->x + rs->x) * 0.5f, sy = (ls->y + rs->y) * 0.5f;
      float hx = (lh->x + rh->x) * 0.5f, hy = (lh->y + rh->y) * 0.5f;
      float torso = std::hypot(sx - hx, sy - hy);
      float ax = la ? la->x : ra->x, ay = la ? la->y : ra->y;
      if (la && ra) {
        ax = (la->x + ra->x) * 0.5f;
        ay = (la->y + ra->y) * 0.5f;
      }
      float leg = std::hypot(hx - ax, hy - ay);
      if (torso > 1e-3f) {
        float ratio = leg / torso;
        if (ratio < rules.bone_ratio_min || ratio > rules.bone_ratio_max) reject("irrational:bone-ratio");
      }
    }
  }

  v.accepted = v.reasons.empty();
  return v;
}

TextRules TextRules::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open rules: " + path);
  nlohmann::json j;
  f >> j;
  TextRules r;
  r.version = j.value("version", "dr-v?");
  if (j.contains("forbidden_symbols")) r.forbidden_symbols = j["forbidden_symbols"].get<std::vector<std::string>>();
  if (j.contains("irrelevant_phrases")) r.irrelevant_phrases = j["irrelevant_phrases"].get<std::vector<std::string>>();
  return r;
}

NoiseVerdict text_verdict(const std::string& caption, const TextRules& rules) {
  NoiseVerdict v;
  v.rule_version = rules.version;

  if (rules.check_empty) {
    bool all_space = true;
    for (char c : caption)
      if (!std::isspace(static_cast<unsigned char>(c))) {
        all_space = false;
        break;
      }
    if (all_space) v.reasons.push_back("empty-caption");
  }
  if (rules.check_symbols) {
    for (const auto& sym : rules.forbidden_symbols)
      if (!sym.empty() && caption.find(sym) != std::string::npos) {
        v.reasons.push_back("forbidden-symbol");
        break;
      }
  }
  if (rules.check_phrases) {
    std::string lower = caption;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& phrase : rules.irrelevant_phrases)
      if (!phrase.empty() && lower.find(phrase) != std::string::npos) {
        v.reasons.push_back("irrelevant-phrase");
        break;
      }
  }
  v.accepted = v.reasons.empty();
  return v;
}

nlohmann::json DenoiseReport::to_json() const {
  nlohmann::json j;
  j["samples_in"] = samples_in;
  j["samples_kept"] = samples_kept;
  j["samples_dropped"] = samples_dropped;
  j["captions_in"] = captions_in;
  j["captions_kept"] = captions_kept;
  j["captions_dropped"] = captions_dropped;
  j["reason_counts"] = reason_counts;
  j["image_rule_version"] = image_rule_version;
  j["text_rule_version"] = text_rule_version;
  return j;
}

}  // namespace pedsyn::denoise
