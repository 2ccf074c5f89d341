#include "pedsyn/prompt_engine.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "pedsyn/error.hpp"
#include "pedsyn/rng.hpp"

namespace pedsyn {

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open: " + path);
  nlohmann::json j;
  f >> j;
  return j;
}

// Slots every shipped template may reference.
const std::set<std::string>& known_slots() {
  static const std::set<std::string> s = {"age",   "gender", "hair",  "u_adjective", "upper",
                                          "sleeve", "l_adjective", "lower", "shoes", "appending",
                                          "angle", "profession", "location", "state"};
  return s;
}

}  // namespace

const std::vector<std::string>& DescriptorLists::slot(const std::string& name) const {
  auto it = slots.find(name);
  if (it == slots.end()) throw ValidationError("descriptor lists: unknown slot '" + name + "'");
  return it->second;
}

std::vector<std::string> DescriptorLists::all_words() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : slots)
    for (const auto& s : v) out.push_back(s);
  for (const auto& [k, v] : l_adjective)
    for (const auto& s : v) out.push_back(s);
  return out;
}

DescriptorLists load_descriptor_lists(const std::string& path) {
  nlohmann::json j = read_json(path);
  DescriptorLists out;
  out.version = j.value("version", "");
  if (!j.contains("slots") || !j["slots"].is_object())
    throw ValidationError("descriptor lists: missing 'slots' object");
  for (const auto& [key, val] : j["slots"].items()) {
    if (!val.is_array()) throw ValidationError("descriptor lists: slot '" + key + "' is not an array");
    out.slots[key] = val.get<std::vector<std::string>>();
  }
  for (const auto& name : known_slots()) {
    if (name == "l_adjective") continue;
    if (!out.slots.count(name)) throw ValidationError("descriptor lists: missing slot '" + name + "'");
    if (out.slots[name].empty()) throw ValidationError("descriptor lists: slot '" + name + "' is empty");
  }
  if (!j.contains("l_adjective") || !j["l_adjective"].is_object())
    throw ValidationError("descriptor lists: missing slot 'l_adjective'");
  for (const auto& [key, val] : j["l_adjective"].items())
    out.l_adjective[key] = val.get<std::vector<std::string>>();
  for (const auto& lower : out.slots["lower"]) {
    auto it = out.l_adjective.find(lower);
    if (it == out.l_adjective.end())
      throw ValidationError("descriptor lists: l_adjective has no entry for lower '" + lower + "'");
    if (it->second.empty())
      throw ValidationError("descriptor lists: l_adjective['" + lower + "'] is empty");
  }
  return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      size_t close = pattern.find('}', i);
      if (close == std::string::npos) throw ValidationError("template '" + id + "': unbalanced brace");
      std::string name = pattern.substr(i + 1, close - i - 1);
      if (seen.insert(name).second) out.push_back(name);
      i = close + 1;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<PromptTemplate> load_prompt_templates(const std::string& path) {
  nlohmann::json j = read_json(path);
  if (!j.contains("templates") || !j["templates"].is_array())
    throw ValidationError("template file: missing 'templates' array");
  std::vector<PromptTemplate> out;
  for (const auto& e : j["templates"]) {
    PromptTemplate t;
    t.id = e.at("id").get<std::string>();
    t.pattern = e.at("pattern").get<std::string>();
    std::string kind = e.at("kind").get<std::string>();
    if (kind == "plain") t.kind = TemplateKind::Plain;
    else if (kind == "rough_appearance") t.kind = TemplateKind::RoughAppearance;
    else if (kind == "rough_profession") t.kind = TemplateKind::RoughProfession;
    else if (kind == "rough_location") t.kind = TemplateKind::RoughLocation;
    else if (kind == "rough_state") t.kind = TemplateKind::RoughState;
    else throw ValidationError("template '" + t.id + "': unknown kind '" + kind + "'");
    out.push_back(std::move(t));
  }
  return out;
}

ExtensionInstructionSet load_extension_instructions(const std::string& path) {
  nlohmann::json j = read_json(path);
  ExtensionInstructionSet out;
  out.pattern = j.at("template").get<std::string>();
  out.sub_instructions = j.at("sub_instructions").get<std::vector<std::string>>();
  if (out.sub_instructions.empty()) throw ValidationError("extension instructions: empty sub-instruction list");
  return out;
}

nlohmann::json PromptSpec::to_json() const {
  nlohmann::json j;
  j["prompt_text"] = prompt_text;
  j["template_id"] = template_id;
  j["slot_values"] = slot_values;
  j["seed"] = seed;
  switch (status) {
    case ExtensionStatus::Raw: j["extension_status"] = "raw"; break;
    case ExtensionStatus::ExtensionRequested: j["extension_status"] = "extension_requested"; break;
    case ExtensionStatus::Extended: j["extension_status"] = "extended"; break;
  }
  if (!extension_instruction.empty()) j["extension_instruction"] = extension_instruction;
  return j;
}

PromptSpec PromptSpec::from_json(const nlohmann::json& j) {
  PromptSpec s;
  s.prompt_text = j.at("prompt_text").get<std::string>();
  s.template_id = j.at("template_id").get<std::string>();
  if (j.contains("slot_values"))
    s.slot_values = j["slot_values"].get<std::map<std::string, std::string>>();
  s.seed = j.at("seed").get<uint64_t>();
  std::string st = j.value("extension_status", "raw");
  s.status = st == "extended" ? ExtensionStatus::Extended
             : st == "extension_requested" ? ExtensionStatus::ExtensionRequested
                                           : ExtensionStatus::Raw;
  s.extension_instruction = j.value("extension_instruction", "");
  return s;
}

PromptEngine::PromptEngine(DescriptorLists lists, std::vector<PromptTemplate> templates,
                           ExtensionInstructionSet extension)
    : lists_(std::move(lists)), templates_(std::move(templates)), extension_(std::move(extension)) {
  validate();
}

void PromptEngine::validate() const {
  if (templates_.empty()) throw ValidationError("prompt engine: no templates registered");
  for (const auto& t : templates_) {
    bool has_ladj = false, has_lower = false;
    for (const auto& ph : t.placeholders()) {
      if (ph == "l_adjective") {
        has_ladj = true;
        continue;
      }
      if (ph == "lower") has_lower = true;
      if (!lists_.slots.count(ph))
        throw ValidationError("template '" + t.id + "' references unknown slot '" + ph + "'");
      if (lists_.slot(ph).empty())
        throw ValidationError("template '" + t.id + "': slot '" + ph + "' has no entries");
    }
    if (has_ladj && !has_lower)
      throw ValidationError("template '" + t.id + "': l_adjective requires lower in the pattern");
  }
}

const PromptTemplate& PromptEngine::get(const std::string& id) const {
  for (const auto& t : templates_)
    if (t.id == id) return t;
  throw ValidationError("no template with id '" + id + "'");
}

PromptSpec PromptEngine::fill(const PromptTemplate& tmpl, uint64_t seed) const {
  PromptSpec spec;
  spec.template_id = tmpl.id;
  spec.seed = seed;

  auto draw = [&](const std::string& slot_name, const std::vector<std::string>& list,
                  uint64_t extra_key) -> const std::string& {
    uint64_t h = mix64(mix64(seed, fnv1a64(slot_name)), extra_key);
    return list[static_cast<size_t>(h % list.size())];
  };

  auto placeholders = tmpl.placeholders();
  // lower must resolve before l_adjective; every other slot is independent.
  for (const auto& ph : placeholders) {
    if (ph == "l_adjective") continue;
    spec.slot_values[ph] = draw(ph, lists_.slot(ph), 0);
  }
  for (const auto& ph : placeholders) {
    if (ph != "l_adjective") continue;
    const std::string& lower = spec.slot_values.at("lower");
    auto it = lists_.l_adjective.find(lower);
    if (it == lists_.l_adjective.end())
      throw ValidationError("l_adjective missing entry for '" + lower + "'");
    spec.slot_values[ph] = draw(ph, it->second, fnv1a64(lower));
  }

  std::string text;
  size_t i = 0;
  while (i < tmpl.pattern.size()) {
    if (tmpl.pattern[i] == '{') {
      size_t close = tmpl.pattern.find('}', i);
      std::string name = tmpl.pattern.substr(i + 1, close - i - 1);
      text += spec.slot_values.at(name);
      i = close + 1;
    } else {
      text += tmpl.pattern[i++];
    }
  }
  spec.prompt_text = std::move(text);
  return spec;
}

uint64_t PromptEngine::count_prompt_space(const PromptTemplate& tmpl) const {
  auto mul_checked = [](uint64_t a, uint64_t b) {
    if (b != 0 && a > UINT64_MAX / b) throw ValidationError("prompt space overflows 64 bits");
    return a * b;
  };
  uint64_t total = 1;
  bool has_ladj = false;
  for (const auto& ph : tmpl.placeholders())
    if (ph == "l_adjective") has_ladj = true;
  for (const auto& ph : tmpl.placeholders()) {
    if (ph == "l_adjective") continue;
    if (ph == "lower" && has_ladj) {
      // Conditional branching: sum of adjective pool sizes over lowers.
      uint64_t sum = 0;
      for (const auto& lower : lists_.slot("lower"))
        sum += lists_.l_adjective.at(lower).size();
      total = mul_checked(total, sum);
    } else {
      total = mul_checked(total, lists_.slot(ph).size());
    }
  }
  return total;
}

std::string PromptEngine::build_extension_instruction(PromptSpec& spec, int sub_instruction_index,
                                                      const std::string& gender) const {
  const PromptTemplate& tmpl = get(spec.template_id);
  if (!tmpl.is_rough())
    throw ValidationError("extension applies to rough templates only; '" + spec.template_id +
                          "' is the plain template");
  if (sub_instruction_index < 0 || sub_instruction_index >= sub_instruction_count())
    throw ValidationError("sub-instruction index " + std::to_string(sub_instruction_index) +
                          " out of range [0," + std::to_string(sub_instruction_count()) + ")");
  std::string who;
  if (gender == "male") who = "man";
  else if (gender == "female") who = "woman";
  else throw ValidationError("gender must be 'male' or 'female', got '" + gender + "'");

  std::string out = extension_.pattern;
  auto replace_all = [&](const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = out.find(from, pos)) != std::string::npos) {
      out.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all("{man/woman}", who);
  replace_all("{primary prompt}", spec.prompt_text);
  replace_all("{sub-instruction}", extension_.sub_instructions[static_cast<size_t>(sub_instruction_index)]);
  spec.status = ExtensionStatus::ExtensionRequested;
  spec.extension_instruction = out;
  return out;
}

std::string default_asset_dir() {
  if (const char* env = std::getenv("PEDSYN_ASSETS")) return env;
  namespace fs = std::filesystem;
  fs::path p = fs::current_path();
  for (int depth = 0; depth < 5; ++depth) {
    fs::path cand = p / "assets";
    if (fs::exists(cand / "descriptor_lists.json")) return cand.string();
    if (!p.has_parent_path() || p.parent_path() == p) break;
    p = p.parent_path();
  }
  throw ValidationError("asset directory not found; set PEDSYN_ASSETS");
}

PromptEngine load_default_prompt_engine(const std::string& asset_dir) {
  return PromptEngine(load_descriptor_lists(asset_dir + "/descriptor_lists.json"),
                      load_prompt_templates(asset_dir + "/prompt_templates.json"),
                      load_extension_instructions(asset_dir + "/extension_instructions.json"));
}

}  // namespace pedsyn
