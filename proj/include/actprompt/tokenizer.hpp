#pragma once

#include <map>
#include <string>
#include <vector>

namespace actprompt {

// Whitespace/punctuation word tokenizer with a corpus-built vocabulary.
// Reserved ids: <bos>=0, <eos>=1, <unk>=2, <pad>=3.
class Tokenizer {
public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kPad = 3;

  Tokenizer() = default;

  // Vocabulary = sorted unique lowercase words from the corpus strings.
  static Tokenizer build(const std::vector<std::string>& corpus);
  static Tokenizer from_tokens(std::vector<std::string> tokens);  // checkpoint restore

  // <bos> words <eos>, truncated then padded to max_len; <eos> always kept.
  std::vector<int> encode(const std::string& text, int max_len) const;

  static std::vector<std::string> split_words(const std::string& text);

  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
};

}  // namespace actprompt
