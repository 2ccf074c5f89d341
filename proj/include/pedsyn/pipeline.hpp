#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pedsyn/backends.hpp"
#include "pedsyn/caption_engine.hpp"
#include "pedsyn/denoise.hpp"
#include "pedsyn/edit_control.hpp"
#include "pedsyn/manifest.hpp"
#include "pedsyn/prompt_engine.hpp"
#include "pedsyn/retrieval.hpp"

namespace pedsyn {

// One human-readable key-value document; every field can be overridden.
struct PipelineConfig {
  std::string asset_dir;

  // prompt construction
  int prompts_per_kind = 10000;

  // generation
  double guidance_scale = 8.5;
  int gen_steps = 20;

  // subject fine-tuning
  double lambda = 1.0;
  int few_shot_iterations = 800;
  double few_shot_lr = 5e-4;  // desk-scale value; full scale uses 2e-6
  int prior_pool_size = 200;
  int prior_pool_steps = 10;

  // adapter fine-tuning
  int lora_rank = 6;
  int lora_iterations = 4000;
  int lora_batch = 64;
  double lora_lr = 1e-2;

  // denoiser pretraining (toy model)
  int pretrain_iterations = 1800;
  int pretrain_batch = 4;
  double pretrain_lr = 2e-3;
  int schedule_steps = 50;

  // augmentation
  double augment_ratio = 0.3;

  // retrieval training
  int train_epochs = 8;
  double train_lr = 1e-3;  // desk-scale; full scale mirrors 3e-5 synthetic / 1e-4 real
  int train_batch = 64;
  double test_fraction = 0.05;

  int image_size = 64;

  static PipelineConfig load(const std::string& path);
  static PipelineConfig with_defaults(const std::string& asset_dir);
  nlohmann::json to_json() const;
};

struct ScenarioPlan {
  std::string scenario = "S1";  // S1 | S2 | S3
  int n_real = 0;               // 0, small K, or -1 for all
  int n_generate = 100;

  void validate() const;
};

struct RunPaths {
  std::string run_dir;
  std::string images_dir() const { return run_dir + "/images"; }
  std::string manifest_dir() const { return run_dir + "/manifest"; }
};

// Scenario orchestration: S1 generates straight from prompts; S2 fine-tunes
// the in-process denoiser with the two-term objective on K subject pairs
// first; S3 trains adapters on the full real set first. The manifest
// persists incrementally and reruns skip already-present sample ids.
struct ScenarioResult {
  int64_t generated = 0;
  int64_t skipped = 0;
  std::string manifest_dir;
};
ScenarioResult run_scenario(const ScenarioPlan& plan, BackendSet& backends, PromptEngine& prompts,
                            const PipelineConfig& cfg, const RunPaths& paths, uint64_t root_seed);

// Intra-class augmentation over a manifest; edited samples inherit the
// source identity. per_image_count may be fractional (expected count).
struct AugmentResult {
  int64_t edited = 0;
  int64_t failed = 0;
  std::vector<std::string> failures;
};
AugmentResult run_augment(const std::set<EditorialObject>& objects, double per_image_count,
                          BackendSet& backends, const PipelineConfig& cfg, const RunPaths& paths,
                          uint64_t seed);

// Caption stage: four entries per sample via the engine; output manifest
// written under <run>/captioned.
int64_t run_caption_stage(CaptionEngine& engine, BackendSet& backends, const PipelineConfig& cfg,
                          const RunPaths& paths, uint64_t seed);

// Denoise stage: partitions <run>/captioned (or the raw manifest) into
// clean/ and rejected/ plus a JSON report.
denoise::DenoiseReport run_denoise_stage(BackendSet& backends, const PipelineConfig& cfg,
                                         const RunPaths& paths,
                                         const denoise::ImageRules& image_rules,
                                         const denoise::TextRules& text_rules);

// In-memory partition used by both the stage and tests.
struct FilterOutcome {
  std::vector<SampleRecord> clean;
  std::vector<SampleRecord> rejected;
  denoise::DenoiseReport report;
};
FilterOutcome filter_manifest(const std::vector<SampleRecord>& records, const std::string& run_dir,
                              KeypointBackend& keypoints, const denoise::ImageRules& image_rules,
                              const denoise::TextRules& text_rules);

// Retrieval stage helpers.
std::vector<retrieval::TrainSample> manifest_to_train_samples(const Manifest& manifest,
                                                              const std::string& run_dir,
                                                              const Vocabulary& vocab,
                                                              const std::string& split_filter,
                                                              int image_size);
struct EvalInputs {
  Tensor gallery;                      // (G,3,S,S)
  std::vector<std::string> gallery_ids;
  std::vector<std::vector<int>> query_tokens;
  std::vector<std::string> query_ids;
};
EvalInputs manifest_to_eval_inputs(const Manifest& manifest, const std::string& run_dir,
                                   const Vocabulary& vocab, const std::string& split_filter,
                                   int image_size);

// Replays one sample from its recorded provenance (generation or edit).
Image replay_sample(const SampleRecord& rec, const Manifest& manifest, BackendSet& backends,
                    const PipelineConfig& cfg, const RunPaths& paths);

}  // namespace pedsyn
