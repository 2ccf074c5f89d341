#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pedsyn/rng.hpp"

namespace pedsyn {

// Word-level vocabulary with frequency metadata. Rarity rank 0 = most
// frequent token; the rarest decile is the top tenth of ranks.
struct VocabEntry {
  std::string token;
  int id = 0;
  int64_t frequency = 0;
  int rarity_rank = 0;  // 0-based, larger = rarer
};

struct IdentifierToken {
  std::string token;
  int vocab_id = 0;
  int rarity_rank = 0;
};

class Vocabulary {
 public:
  static Vocabulary from_entries(std::vector<std::pair<std::string, int64_t>> entries);
  static Vocabulary load_json(const std::string& path);

  int size() const { return static_cast<int>(entries_.size()); }
  const VocabEntry& entry(int id) const { return entries_[static_cast<size_t>(id)]; }
  std::optional<int> id_of(const std::string& token) const;
  int unk_id() const { return unk_id_; }
  int null_id() const { return null_id_; }

  // Lowercases, splits on whitespace, and keeps , . : as separate tokens.
  static std::vector<std::string> split_words(const std::string& text);
  std::vector<int> encode(const std::string& text) const;
  std::vector<std::string> tokenize(const std::string& text) const;

  // Uniform draw from the rarest decile, excluding the given words.
  // Requires >= 10 entries with frequency metadata.
  IdentifierToken sample_identifier(uint64_t seed, const std::vector<std::string>& excluded) const;

 private:
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, int> index_;
  int unk_id_ = 0;
  int null_id_ = 0;
};

}  // namespace pedsyn
