#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ssnt {

// Token <-> id map. Ids 0, 1, 2 are reserved for BOS, EOS and UNK.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Returns the id of `token`, adding it if new.
  int add(std::string_view token);
  std::optional<int> find(std::string_view token) const;
  int id_or_unk(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  // Maps tokens to ids (unknown -> UNK) and appends EOS.
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Maps ids back to tokens, dropping EOS and BOS.
  std::vector<std::string> decode(std::span<const int> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace ssnt
