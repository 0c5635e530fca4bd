#include "ssnt/vocab.hpp"

#include "ssnt/errors.hpp"

namespace ssnt {

Vocabulary::Vocabulary() {
  add(kBosToken);
  add(kEosToken);
  add(kUnkToken);
}

int Vocabulary::add(std::string_view token) {
  if (auto id = find(token)) return *id;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id_or_unk(std::string_view token) const {
  return find(token).value_or(kUnk);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(id_or_unk(t));
  ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kEos || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 3) throw FormatError("vocabulary must be a list");
  Vocabulary v;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto tok = j[k].get<std::string>();
    if (k < 3) {
      if (tok != v.tokens_[k]) throw FormatError("reserved vocabulary entries altered");
      continue;
    }
    if (v.contains(tok)) throw FormatError("duplicate vocabulary entry: " + tok);
    v.add(tok);
  }
  return v;
}

}  // namespace ssnt
