#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedsyn/image.hpp"

namespace pedsyn::denoise {

struct Keypoint {
  std::string name;
  float x = 0.f, y = 0.f;
  float confidence = 0.f;
};

// 17-point skeleton payload; duplicate names may appear (duplicated parts).
struct KeypointSet {
  std::vector<Keypoint> keypoints;
  int instance_count = 0;

  nlohmann::json to_json() const;
  static KeypointSet from_json(const nlohmann::json& j);
};

struct NoiseVerdict {
  bool accepted = true;
  std::vector<std::string> reasons;
  std::string rule_version;

  nlohmann::json to_json() const;
};

struct ImageRules {
  float confidence_threshold = 0.5f;
  float bone_ratio_min = 0.3f;  // leg length / torso length
  float bone_ratio_max = 3.5f;
  bool check_completeness = true;
  bool check_rationality = true;
  std::string version = "ir-v1";
};

// Completeness: every required group (head, torso, each leg) needs at least
// one confident member. Rationality: exactly one person instance, no
// duplicated confident part, bone-length ratios within bounds.
NoiseVerdict image_verdict(const KeypointSet& kps, const ImageRules& rules);

struct TextRules {
  std::string version = "dr-v1";
  std::vector<std::string> forbidden_symbols = {"[", "]", "{", "}", "<", ">"};
  std::vector<std::string> irrelevant_phrases;
  bool check_symbols = true;
  bool check_phrases = true;
  bool check_empty = true;

  static TextRules load(const std::string& path);
};

NoiseVerdict text_verdict(const std::string& caption, const TextRules& rules);

struct DenoiseReport {
  int64_t samples_in = 0, samples_kept = 0, samples_dropped = 0;
  int64_t captions_in = 0, captions_kept = 0, captions_dropped = 0;
  std::map<std::string, int64_t> reason_counts;
  std::string image_rule_version, text_rule_version;

  nlohmann::json to_json() const;
};

}  // namespace pedsyn::denoise
