#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pedsyn {

struct CaptionEntry {
  std::string text;
  std::string kind;  // "constant" | "variable"
  std::string backend_id;
  int template_index = -1;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const;
  static CaptionEntry from_json(const nlohmann::json& j);
};

struct SampleRecord {
  std::string sample_id;
  std::string identity_id;
  std::string image_path;  // relative to the run directory
  std::string image_sha256;
  std::vector<CaptionEntry> captions;

  // provenance
  std::string scenario;  // "S1" | "S2" | "S3"
  nlohmann::json prompt_spec;
  uint64_t generation_seed = 0;
  double guidance_scale = 8.5;
  int steps = 20;
  std::string backend_id;
  nlohmann::json edit_chain = nlohmann::json::array();
  std::string source_sample_id;

  nlohmann::json noise = nlohmann::json::object();
  std::string split;

  nlohmann::json to_json() const;
  static SampleRecord from_json(const nlohmann::json& j);
};

// JSON-lines manifest sharded at shard_limit records; each sealed shard ends
// with a footer line carrying the record count and a running content hash.
// Append-only; reopening an unsealed run resumes after the existing records.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& dir, int64_t shard_limit = 50000);
  ~ManifestWriter();

  void add(const SampleRecord& rec);
  void seal();
  int64_t written() const { return total_; }

 private:
  void open_shard();
  void close_shard();

  std::string dir_;
  int64_t shard_limit_;
  int shard_index_ = 0;
  int64_t in_shard_ = 0;
  int64_t total_ = 0;
  std::string hash_acc_;  // rolling hash of the open shard's lines
  void* file_ = nullptr;  // FILE*
};

struct Manifest {
  std::vector<SampleRecord> records;
  bool sealed = false;

  static Manifest load(const std::string& dir);
  static bool exists(const std::string& dir);
  std::set<std::string> sample_ids() const;

  // Every image path resolves; every edited sample's source is present.
  void validate(const std::string& run_dir) const;
};

std::string manifest_shard_name(int index);

}  // namespace pedsyn
