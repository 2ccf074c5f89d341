#include "pedsyn/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pedsyn/error.hpp"
#include "pedsyn/image.hpp"

namespace fs = std::filesystem;

namespace pedsyn {

nlohmann::json CaptionEntry::to_json() const {
  nlohmann::json j;
  j["text"] = text;
  j["kind"] = kind;
  j["backend_id"] = backend_id;
  if (template_index >= 0) j["template_index"] = template_index;
  j["seed"] = seed;
  if (failed) {
    j["failed"] = true;
    j["error"] = error;
  }
  return j;
}

CaptionEntry CaptionEntry::from_json(const nlohmann::json& j) {
  CaptionEntry c;
  c.text = j.value("text", "");
  c.kind = j.at("kind").get<std::string>();
  c.backend_id = j.value("backend_id", "");
  c.template_index = j.value("template_index", -1);
  c.seed = j.value("seed", 0ull);
  c.failed = j.value("failed", false);
  c.error = j.value("error", "");
  return c;
}

nlohmann::json SampleRecord::to_json() const {
  nlohmann::json j;
  j["sample_id"] = sample_id;
  j["identity_id"] = identity_id;
  j["image_path"] = image_path;
  j["image_sha256"] = image_sha256;
  nlohmann::json caps = nlohmann::json::array();
  for (const auto& c : captions) caps.push_back(c.to_json());
  j["captions"] = caps;
  nlohmann::json prov;
  prov["scenario"] = scenario;
  prov["prompt_spec"] = prompt_spec;
  prov["generation_seed"] = generation_seed;
  prov["guidance_scale"] = guidance_scale;
  prov["steps"] = steps;
  prov["backend_id"] = backend_id;
  if (!edit_chain.empty()) prov["edit_chain"] = edit_chain;
  if (!source_sample_id.empty()) prov["source_sample_id"] = source_sample_id;
  j["provenance"] = prov;
  if (!noise.empty()) j["noise"] = noise;
  if (!split.empty()) j["split"] = split;
  return j;
}

SampleRecord SampleRecord::from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.identity_id = j.at("identity_id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.image_sha256 = j.value("image_sha256", "");
  for (const auto& c : j.value("captions", nlohmann::json::array())) r.captions.push_back(CaptionEntry::from_json(c));
  const auto& prov = j.at("provenance");
  r.scenario = prov.value("scenario", "");
  r.prompt_spec = prov.value("prompt_spec", nlohmann::json::object());
  r.generation_seed = prov.value("generation_seed", 0ull);
  r.guidance_scale = prov.value("guidance_scale", 8.5);
  r.steps = prov.value("steps", 20);
  r.backend_id = prov.value("backend_id", "");
  r.edit_chain = prov.value("edit_chain", nlohmann::json::array());
  r.source_sample_id = prov.value("source_sample_id", "");
  r.noise = j.value("noise", nlohmann::json::object());
  r.split = j.value("split", "");
  return r;
}

std::string manifest_shard_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "manifest-%05d.jsonl", index);
  return buf;
}

ManifestWriter::ManifestWriter(const std::string& dir, int64_t shard_limit)
    : dir_(dir), shard_limit_(shard_limit) {
  if (shard_limit_ < 1) throw ValidationError("manifest shard limit must be positive");
  fs::create_directories(dir_);
  // Resume: skip fully sealed shards, reopen an unsealed trailing shard.
  while (fs::exists(fs::path(dir_) / manifest_shard_name(shard_index_))) {
    std::ifstream in(fs::path(dir_) / manifest_shard_name(shard_index_));
    std::string line, last;
    int64_t count = 0;
    std::string acc;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      last = line;
      if (line.find("\"__footer__\"") == std::string::npos) {
        ++count;
        acc = sha256_hex(acc + line);
      }
    }
    bool sealed = last.find("\"__footer__\"") != std::string::npos;
    total_ += count;
    if (!sealed) {
      in_shard_ = count;
      hash_acc_ = acc;
      file_ = std::fopen((fs::path(dir_) / manifest_shard_name(shard_index_)).c_str(), "ab");
      if (!file_) throw ValidationError("cannot reopen manifest shard");
      return;
    }
    ++shard_index_;
  }
  open_shard();
}

ManifestWriter::~ManifestWriter() {
  if (file_) std::fclose(static_cast<FILE*>(file_));
}

void ManifestWriter::open_shard() {
  file_ = std::fopen((fs::path(dir_) / manifest_shard_name(shard_index_)).c_str(), "wb");
  if (!file_) throw ValidationError("cannot open manifest shard for write");
  in_shard_ = 0;
  hash_acc_.clear();
}

void ManifestWriter::close_shard() {
  if (!file_) return;
  nlohmann::json footer;
  footer["__footer__"] = {{"records", in_shard_}, {"sha256", hash_acc_}};
  std::string line = footer.dump();
  std::fwrite(line.data(), 1, line.size(), static_cast<FILE*>(file_));
  std::fwrite("\n", 1, 1, static_cast<FILE*>(file_));
  std::fclose(static_cast<FILE*>(file_));
  file_ = nullptr;
}

void ManifestWriter::add(const SampleRecord& rec) {
  if (!file_) throw ValidationError("manifest writer is sealed");
  std::string line = rec.to_json().dump();
  std::fwrite(line.data(), 1, line.size(), static_cast<FILE*>(file_));
  std::fwrite("\n", 1, 1, static_cast<FILE*>(file_));
  hash_acc_ = sha256_hex(hash_acc_ + line);
  ++in_shard_;
  ++total_;
  if (in_shard_ >= shard_limit_) {
    close_shard();
    ++shard_index_;
    open_shard();
  }
}

void ManifestWriter::seal() {
  if (!file_) return;
  std::fflush(static_cast<FILE*>(file_));
  close_shard();
}

bool Manifest::exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / manifest_shard_name(0));
}

Manifest Manifest::load(const std::string& dir) {
  Manifest m;
  int index = 0;
  bool all_sealed = true;
  bool any = false;
  while (fs::exists(fs::path(dir) / manifest_shard_name(index))) {
    any = true;
    std::ifstream in(fs::path(dir) / manifest_shard_name(index));
    if (!in) throw ValidationError("cannot open manifest shard " + std::to_string(index));
    std::string line;
    bool sealed = false;
    int64_t count = 0;
    std::string acc;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("__footer__")) {
        sealed = true;
        const auto& f = j["__footer__"];
        if (f.at("records").get<int64_t>() != count)
          throw ValidationError("manifest footer count mismatch in shard " + std::to_string(index));
        if (f.at("sha256").get<std::string>() != acc)
          throw ValidationError("manifest footer checksum mismatch in shard " + std::to_string(index));
        break;
      }
      acc = sha256_hex(acc + line);
      ++count;
      m.records.push_back(SampleRecord::from_json(j));
    }
    all_sealed = all_sealed && sealed;
    ++index;
  }
  if (!any) throw ValidationError("no manifest found in " + dir);
  m.sealed = all_sealed;
  return m;
}

std::set<std::string> Manifest::sample_ids() const {
  std::set<std::string> out;
  for (const auto& r : records) out.insert(r.sample_id);
  return out;
}

void Manifest::validate(const std::string& run_dir) const {
  std::set<std::string> ids = sample_ids();
  if (ids.size() != records.size()) throw ValidationError("manifest: duplicate sample ids");
  for (const auto& r : records) {
    if (!fs::exists(fs::path(run_dir) / r.image_path))
      throw ValidationError("manifest: missing image " + r.image_path);
    if (!r.source_sample_id.empty() && !ids.count(r.source_sample_id))
      throw ValidationError("manifest: edited sample " + r.sample_id + " has unknown source " +
                            r.source_sample_id);
  }
}

}  // namespace pedsyn
