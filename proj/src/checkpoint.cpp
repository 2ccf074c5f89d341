#include "pedsyn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pedsyn/error.hpp"

namespace pedsyn {

static const char kMagic[8] = {'P', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
static constexpr uint32_t kVersion = 1;

void save_checkpoint(const std::string& path, const std::string& kind, const nlohmann::json& config,
                     const std::map<std::string, Tensor*>& tensors) {
  nlohmann::json dir = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["offset"] = offset;
    e["numel"] = t->numel();
    dir.push_back(e);
    offset += static_cast<uint64_t>(t->numel()) * sizeof(float);
  }
  nlohmann::json header;
  header["kind"] = kind;
  header["config"] = config;
  header["tensors"] = dir;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open checkpoint for write: " + path);
  f.write(kMagic, 8);
  uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  if (!f) throw ValidationError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) throw ValidationError("not a checkpoint file: " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kVersion) throw ValidationError("unsupported checkpoint version");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(hs);

  Checkpoint out;
  out.kind = header.at("kind").get<std::string>();
  out.config = header.value("config", nlohmann::json::object());
  uint64_t base = 8 + sizeof(uint32_t) + sizeof(uint64_t) + hlen;
  for (const auto& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    uint64_t offset = e.at("offset").get<uint64_t>();
    int64_t numel = e.at("numel").get<int64_t>();
    Tensor t(shape);
    if (t.numel() != numel) throw ValidationError("checkpoint directory corrupt for " + name);
    f.seekg(static_cast<std::streamoff>(base + offset));
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw ValidationError("checkpoint data truncated at " + name);
    out.tensors.emplace(std::move(name), std::move(t));
  }
  return out;
}

void schedule_into(std::map<std::string, Tensor>& storage, std::map<std::string, Tensor*>& out,
                   const NoiseSchedule& sched) {
  storage["schedule.alpha"] = Tensor({static_cast<int>(sched.alpha.size())}, std::vector<float>(sched.alpha));
  storage["schedule.sigma"] = Tensor({static_cast<int>(sched.sigma.size())}, std::vector<float>(sched.sigma));
  storage["schedule.omega"] = Tensor({static_cast<int>(sched.omega.size())}, std::vector<float>(sched.omega));
  for (auto& [k, v] : storage)
    if (k.rfind("schedule.", 0) == 0) out[k] = &v;
}

NoiseSchedule schedule_from(const Checkpoint& ckpt) {
  NoiseSchedule s;
  auto get = [&](const char* name) -> const Tensor& {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw ValidationError(std::string("checkpoint missing ") + name);
    return it->second;
  };
  s.alpha = get("schedule.alpha").data;
  s.sigma = get("schedule.sigma").data;
  s.omega = get("schedule.omega").data;
  s.steps = static_cast<int>(s.alpha.size()) - 1;
  s.validate();
  return s;
}

}  // namespace pedsyn
