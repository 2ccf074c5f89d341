#include "pedsyn/caption_engine.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include "pedsyn/error.hpp"
#include "pedsyn/rng.hpp"

namespace pedsyn {

CaptionTemplatePool CaptionTemplatePool::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open template pool: " + path);
  nlohmann::json j;
  f >> j;
  CaptionTemplatePool pool;
  pool.version = j.value("version", "");
  pool.templates = j.at("templates").get<std::vector<std::string>>();
  int declared = j.at("declared_size").get<int>();
  if (declared != pool.size())
    throw ValidationError("template pool declares " + std::to_string(declared) + " entries but has " +
                          std::to_string(pool.size()));
  for (const auto& t : pool.templates)
    if (t.empty()) throw ValidationError("template pool contains an empty entry");
  return pool;
}

CaptionInstructions CaptionInstructions::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open caption instructions: " + path);
  nlohmann::json j;
  f >> j;
  CaptionInstructions out;
  out.constant = j.at("constant").get<std::string>();
  out.variable_pattern = j.at("variable").get<std::string>();
  if (out.variable_pattern.find("{template}") == std::string::npos)
    throw ValidationError("variable instruction lacks the {template} placeholder");
  return out;
}

CaptionEngine::CaptionEngine(CaptionInstructions instructions, CaptionTemplatePool pool)
    : instructions_(std::move(instructions)), pool_(std::move(pool)) {
  if (pool_.size() == 0) throw ValidationError("caption template pool is empty");
}

std::pair<std::string, int> CaptionEngine::variable_instruction(uint64_t seed) const {
  Rng rng(mix64(seed, 0xCA91ull));
  int index = static_cast<int>(rng.next_below(static_cast<uint64_t>(pool_.size())));
  std::string out = instructions_.variable_pattern;
  const std::string key = "{template}";
  size_t at = out.find(key);
  while (at != std::string::npos) {
    out.replace(at, key.size(), pool_.templates[static_cast<size_t>(index)]);
    at = out.find(key, at + pool_.templates[static_cast<size_t>(index)].size());
  }
  return {out, index};
}

std::vector<CaptionEntry> CaptionEngine::request_captions(
    const std::string& sample_id, const Image& image,
    const std::vector<std::shared_ptr<CaptionBackend>>& backends, uint64_t seed,
    const RequestPolicy& policy) const {
  if (backends.empty()) throw ValidationError("request_captions: no caption backend registered");
  if (policy.complete_mode && backends.size() < 3)
    throw ValidationError("complete caption mode needs three variable backends (got " +
                          std::to_string(backends.size()) + ")");

  struct Planned {
    std::string kind;
    std::string instruction;
    int template_index;
    std::shared_ptr<CaptionBackend> backend;
  };
  std::vector<Planned> plan;
  plan.push_back({"constant", instructions_.constant, -1, backends.front()});
  size_t n_var = std::min<size_t>(3, backends.size());
  for (size_t b = 0; b < n_var; ++b) {
    auto [instr, idx] = variable_instruction(mix64(seed, b + 1));
    plan.push_back({"variable", instr, idx, backends[b]});
  }

  std::vector<CaptionEntry> out;
  for (const auto& p : plan) {
    CaptionEntry entry;
    entry.kind = p.kind;
    entry.template_index = p.template_index;
    entry.backend_id = p.backend->id();
    // Idempotent request key: the seed is derived from sample id and the
    // instruction content, so retries and reruns repeat the same request.
    entry.seed = mix64(mix64(seed, fnv1a64(sample_id)), fnv1a64(p.instruction));

    int delay = policy.backoff_ms;
    std::string last_err;
    bool ok = false;
    for (int attempt = 0; attempt < std::max(1, policy.attempts); ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
      try {
        CaptionResult res = p.backend->caption(image, p.instruction, entry.seed);
        entry.text = res.caption;
        entry.backend_id = res.model_id;
        ok = true;
        break;
      } catch (const std::exception& e) {
        last_err = e.what();
      }
    }
    if (!ok) {
      entry.failed = true;
      entry.error = last_err;
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace pedsyn
