#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pedsyn/backends.hpp"
#include "pedsyn/manifest.hpp"

namespace pedsyn {

struct CaptionTemplatePool {
  std::string version;
  std::vector<std::string> templates;

  static CaptionTemplatePool load(const std::string& path);  // rejects size mismatch
  int size() const { return static_cast<int>(templates.size()); }
};

struct CaptionInstructions {
  std::string constant;
  std::string variable_pattern;  // carries {template}

  static CaptionInstructions load(const std::string& path);
};

class CaptionEngine {
 public:
  CaptionEngine(CaptionInstructions instructions, CaptionTemplatePool pool);

  // The fixed instruction, byte-for-byte.
  const std::string& constant_instruction() const { return instructions_.constant; }

  // {template} replaced by a seeded-uniform pool entry.
  std::pair<std::string, int> variable_instruction(uint64_t seed) const;

  const CaptionTemplatePool& pool() const { return pool_; }

  struct RequestPolicy {
    int attempts = 3;
    int backoff_ms = 100;  // exponential
    bool complete_mode = true;  // require the full four-pairing set up front
  };

  // One constant-instruction request to the first backend plus one variable
  // request to each of three backends; failures after retries become
  // failure records on the returned set.
  std::vector<CaptionEntry> request_captions(const std::string& sample_id, const Image& image,
                                             const std::vector<std::shared_ptr<CaptionBackend>>& backends,
                                             uint64_t seed, const RequestPolicy& policy = {}) const;

 private:
  CaptionInstructions instructions_;
  CaptionTemplatePool pool_;
};

}  // namespace pedsyn
