#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pedsyn {

// Slot pools for the description templates. l_adjective is conditioned on
// the chosen lower-garment value.
struct DescriptorLists {
  std::map<std::string, std::vector<std::string>> slots;
  std::map<std::string, std::vector<std::string>> l_adjective;
  std::string version;

  const std::vector<std::string>& slot(const std::string& name) const;
  std::vector<std::string> all_words() const;  // for identifier exclusion
};

enum class TemplateKind { Plain, RoughAppearance, RoughProfession, RoughLocation, RoughState };

struct PromptTemplate {
  std::string id;
  TemplateKind kind = TemplateKind::Plain;
  std::string pattern;

  bool is_rough() const { return kind != TemplateKind::Plain; }
  std::vector<std::string> placeholders() const;  // in order of appearance, with repeats removed
};

enum class ExtensionStatus { Raw, ExtensionRequested, Extended };

struct PromptSpec {
  std::string prompt_text;
  std::string template_id;
  std::map<std::string, std::string> slot_values;
  uint64_t seed = 0;
  ExtensionStatus status = ExtensionStatus::Raw;
  std::string extension_instruction;

  nlohmann::json to_json() const;
  static PromptSpec from_json(const nlohmann::json& j);
};

DescriptorLists load_descriptor_lists(const std::string& path);
std::vector<PromptTemplate> load_prompt_templates(const std::string& path);

struct ExtensionInstructionSet {
  std::string pattern;  // carries {man/woman}, {primary prompt}, {sub-instruction}
  std::vector<std::string> sub_instructions;
};
ExtensionInstructionSet load_extension_instructions(const std::string& path);

class PromptEngine {
 public:
  PromptEngine(DescriptorLists lists, std::vector<PromptTemplate> templates,
               ExtensionInstructionSet extension);

  const DescriptorLists& lists() const { return lists_; }
  const std::vector<PromptTemplate>& templates() const { return templates_; }
  const PromptTemplate& get(const std::string& id) const;

  // Deterministic: each slot is sampled from a stream keyed by (seed, slot
  // name); l_adjective is keyed additionally by the chosen lower value, so
  // the same seed always yields the same prompt regardless of slot order.
  PromptSpec fill(const PromptTemplate& tmpl, uint64_t seed) const;

  // Exact count of distinct raw prompts, accounting for the conditional
  // lower -> l_adjective branching.
  uint64_t count_prompt_space(const PromptTemplate& tmpl) const;

  // Resolves the extension instruction for a rough-template spec and marks
  // it extension_requested. Plain templates are not extendable.
  std::string build_extension_instruction(PromptSpec& spec, int sub_instruction_index,
                                          const std::string& gender) const;

  int sub_instruction_count() const { return static_cast<int>(extension_.sub_instructions.size()); }

 private:
  void validate() const;

  DescriptorLists lists_;
  std::vector<PromptTemplate> templates_;
  ExtensionInstructionSet extension_;
};

// Asset directory resolution: $PEDSYN_ASSETS, then ./assets upward.
std::string default_asset_dir();
PromptEngine load_default_prompt_engine(const std::string& asset_dir);

}  // namespace pedsyn
