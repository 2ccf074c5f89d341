#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedsyn/attention.hpp"
#include "pedsyn/diffusion.hpp"

namespace pedsyn {

// Maps each edited-prompt token to its original-prompt source, or kAdded.
struct TokenAlignment {
  static constexpr int kAdded = -1;
  std::vector<std::string> original_tokens;
  std::vector<std::string> edited_tokens;
  std::vector<int> map;  // size = edited_tokens.size()

  // Longest common subsequence over exact token strings; ties resolved by
  // matching as early as possible in both sequences.
  static TokenAlignment compute(const std::vector<std::string>& original,
                                const std::vector<std::string>& edited);

  bool is_identity() const;
  int added_count() const;
  void validate() const;
};

struct TauSchedule {
  enum class Mode { FractionOfSteps, AbsoluteStep };
  Mode mode = Mode::FractionOfSteps;
  double value = 0.8;

  int resolve(int total_steps) const;
};

enum class EditMechanism { Local, Global, NonRigid };
enum class EditorialObject { Background, Weather, Style, Posture };

const char* to_string(EditMechanism m);
const char* to_string(EditorialObject o);
EditMechanism mechanism_for(EditorialObject o);

struct EditDirective {
  EditMechanism mechanism = EditMechanism::Local;
  EditorialObject object = EditorialObject::Background;
  std::string original_prompt;
  std::string edited_prompt;
  std::string descriptor;  // the drawn list element
  TauSchedule tau;
  TokenAlignment alignment;

  nlohmann::json to_json() const;
  static EditDirective from_json(const nlohmann::json& j);
};

// Descriptor lists of the four editorial objects (fixed pairing:
// background/weather -> local, style -> global, posture -> non-rigid).
const std::vector<std::string>& editorial_descriptors(EditorialObject o);

// Instantiates the object's prompt pair with a seeded descriptor draw. For
// style edits base_caption must be the sample's synthetic caption.
EditDirective build_directive(EditorialObject object, const std::string& base_caption, uint64_t seed);

// ----------------------------------------------------------- controllers --

// Sites captured from the original-prompt pass, keyed for replay.
using SiteStore = std::map<SiteKey, AttentionSite>;
SiteStore index_sites(const std::vector<AttentionSite>& sites);

// Column provenance of an assembled map (audit trail).
enum class ColumnSource : uint8_t { Edited = 0, Original = 1 };

// Uses the edited map before tau and the original map from tau onward.
// set use_original_early to flip to the complementary schedule.
class LocalEditController : public AttentionController {
 public:
  LocalEditController(const SiteStore& originals, TokenAlignment alignment, int tau,
                      bool use_original_early = false);
  Tensor on_map(const SiteKey& key, Tensor a_hat) override;
  const std::map<SiteKey, std::vector<ColumnSource>>& provenance() const { return provenance_; }

 private:
  const SiteStore& originals_;
  TokenAlignment alignment_;
  int tau_;
  bool flip_;
  std::map<SiteKey, std::vector<ColumnSource>> provenance_;
};

// Column-wise assembly: added tokens keep the edited map, all others take
// the original map at the aligned column; applied at every step.
class GlobalEditController : public AttentionController {
 public:
  GlobalEditController(const SiteStore& originals, TokenAlignment alignment);
  Tensor on_map(const SiteKey& key, Tensor a_hat) override;
  const std::map<SiteKey, std::vector<ColumnSource>>& provenance() const { return provenance_; }

 private:
  const SiteStore& originals_;
  TokenAlignment alignment_;
  std::map<SiteKey, std::vector<ColumnSource>> provenance_;
};

// Mutual attention: before tau the edited query attends to the original
// prompt's key/value embeddings; afterwards plain edited attention.
class NonRigidController : public AttentionController {
 public:
  NonRigidController(const SiteStore& originals, int tau, bool use_original_early = true);
  bool override_kv(const SiteKey& key, Tensor& k, Tensor& v) override;

 private:
  const SiteStore& originals_;
  int tau_;
  bool use_original_early_;
};

// --------------------------------------------------------------- editing --

struct EditOptions {
  GenOptions gen;
  float max_invert_err = 5e-2f;
  // Maps prompt text to model token ids (required).
  std::function<std::vector<int>(const std::string&)> encode;
};

struct EditResult {
  Tensor image;  // (3,H,W)
  float invert_err = 0.f;
  nlohmann::json provenance;
};

class EditAbortError : public ValidationError {
 public:
  explicit EditAbortError(const std::string& what) : ValidationError(what) {}
};

// invert under the original prompt, regenerate under the edited prompt with
// the directive's controller attached at every cross-attention site.
EditResult edit_image(Denoiser& model, const NoiseSchedule& sched, const Tensor& image,
                      const EditDirective& directive, const EditOptions& opts);

// Tokenization used for alignment and prompt encoding in edits.
std::vector<std::string> edit_tokenize(const std::string& prompt);

}  // namespace pedsyn
