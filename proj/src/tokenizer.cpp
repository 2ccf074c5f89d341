#include "pedsyn/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "pedsyn/error.hpp"

namespace pedsyn {

Vocabulary Vocabulary::from_entries(std::vector<std::pair<std::string, int64_t>> entries) {
  if (entries.empty()) throw ValidationError("vocabulary: no entries");
  Vocabulary v;
  v.entries_.reserve(entries.size() + 2);
  for (auto& [tok, freq] : entries) {
    if (freq < 0) throw ValidationError("vocabulary: token '" + tok + "' lacks frequency metadata");
    VocabEntry e;
    e.token = tok;
    e.id = static_cast<int>(v.entries_.size());
    e.frequency = freq;
    v.entries_.push_back(std::move(e));
  }
  // Reserved tokens sit outside the rarity ranking.
  auto add_special = [&](const std::string& t) {
    VocabEntry e;
    e.token = t;
    e.id = static_cast<int>(v.entries_.size());
    e.frequency = 0;
    e.rarity_rank = -1;
    v.entries_.push_back(e);
    return e.id;
  };
  v.unk_id_ = add_special("<unk>");
  v.null_id_ = add_special("<null>");

  // Rank by descending frequency; ties broken by token for determinism.
  std::vector<int> order;
  for (const auto& e : v.entries_)
    if (e.rarity_rank != -1) order.push_back(e.id);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ea = v.entries_[static_cast<size_t>(a)];
    const auto& eb = v.entries_[static_cast<size_t>(b)];
    if (ea.frequency != eb.frequency) return ea.frequency > eb.frequency;
    return ea.token < eb.token;
  });
  for (size_t r = 0; r < order.size(); ++r) v.entries_[static_cast<size_t>(order[r])].rarity_rank = static_cast<int>(r);

  for (const auto& e : v.entries_) {
    if (!v.index_.emplace(e.token, e.id).second)
      throw ValidationError("vocabulary: duplicate token '" + e.token + "'");
  }
  return v;
}

Vocabulary Vocabulary::load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open vocabulary: " + path);
  nlohmann::json j;
  f >> j;
  if (!j.contains("tokens") || !j["tokens"].is_array())
    throw ValidationError("vocabulary file missing 'tokens' array");
  std::vector<std::pair<std::string, int64_t>> entries;
  for (const auto& item : j["tokens"]) {
    if (!item.is_array() || item.size() != 2)
      throw ValidationError("vocabulary entries must be [token, frequency] pairs");
    entries.emplace_back(item[0].get<std::string>(), item[1].get<int64_t>());
  }
  return from_entries(std::move(entries));
}

std::optional<int> Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (ch == ',' || ch == '.' || ch == ':') {
      flush();
      out.push_back(std::string(1, ch));
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

std::vector<std::string> Vocabulary::tokenize(const std::string& text) const { return split_words(text); }

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    auto id = id_of(w);
    ids.push_back(id ? *id : unk_id_);
  }
  return ids;
}

IdentifierToken Vocabulary::sample_identifier(uint64_t seed, const std::vector<std::string>& excluded) const {
  int ranked = 0;
  for (const auto& e : entries_)
    if (e.rarity_rank >= 0) ++ranked;
  if (ranked < 10) throw ValidationError("identifier sampling needs >= 10 ranked vocabulary entries");

  // Words appearing in the exclusion set (descriptor lists) are never
  // eligible, including multi-word phrases.
  std::set<std::string> banned;
  for (const auto& phrase : excluded)
    for (const auto& w : split_words(phrase)) banned.insert(w);

  int decile_floor = ranked - ranked / 10;  // ranks >= floor are the rarest decile
  std::vector<const VocabEntry*> eligible;
  for (const auto& e : entries_)
    if (e.rarity_rank >= decile_floor && !banned.count(e.token)) eligible.push_back(&e);
  if (eligible.empty()) throw ValidationError("no eligible identifier: rarest decile fully excluded");
  std::sort(eligible.begin(), eligible.end(),
            [](const VocabEntry* a, const VocabEntry* b) { return a->rarity_rank < b->rarity_rank; });

  Rng rng(mix64(seed, 0x1D3Full));
  const VocabEntry* pick = eligible[static_cast<size_t>(rng.next_below(eligible.size()))];
  return IdentifierToken{pick->token, pick->id, pick->rarity_rank};
}

}  // namespace pedsyn
