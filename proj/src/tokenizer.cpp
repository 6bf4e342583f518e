#include "actprompt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "actprompt/errors.hpp"

namespace actprompt {

std::vector<std::string> Tokenizer::split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      cur += static_cast<char>(std::tolower(uc));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) words.insert(std::move(w));
  }
  std::vector<std::string> tokens = {"<bos>", "<eos>", "<unk>", "<pad>"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return from_tokens(std::move(tokens));
}

Tokenizer Tokenizer::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 4 || tokens[0] != "<bos>" || tokens[1] != "<eos>" ||
      tokens[2] != "<unk>" || tokens[3] != "<pad>") {
    throw InputError("tokenizer vocabulary must start with <bos> <eos> <unk> <pad>");
  }
  Tokenizer t;
  t.id_to_token_ = std::move(tokens);
  for (size_t i = 0; i < t.id_to_token_.size(); ++i) {
    t.token_to_id_[t.id_to_token_[i]] = static_cast<int>(i);
  }
  return t;
}

std::vector<int> Tokenizer::encode(const std::string& text, int max_len) const {
  if (text.empty()) throw InputError("cannot tokenize empty text");
  if (max_len < 3) throw InputError("max_text_len must be >= 3");
  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(max_len));
  ids.push_back(kBos);
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) == max_len - 1) break;  // room for <eos>
    auto it = token_to_id_.find(w);
    ids.push_back(it != token_to_id_.end() ? it->second : kUnk);
  }
  ids.push_back(kEos);
  while (static_cast<int>(ids.size()) < max_len) ids.push_back(kPad);
  return ids;
}

}  // namespace actprompt
