#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace lgvi::lang {

// Closed vocabulary over the synthetic corpus. Reserved ids are fixed so
// token streams stay valid across vocab rebuilds.
struct Vocabulary {
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kPromptOpen = 3;   // <PROMPT>
  static constexpr int kPromptClose = 4;  // </PROMPT>
  static constexpr int kImg = 5;

  std::vector<std::string> tokens;             // id -> text
  std::unordered_map<std::string, int> index;  // text -> id

  int size() const { return static_cast<int>(tokens.size()); }
  bool has(const std::string& t) const { return index.count(t) > 0; }
  int id(const std::string& t) const;  // throws on out-of-vocabulary
  const std::string& text(int id) const;
};

// Deterministic: reserved tokens, then the generator lexicon in sorted order.
Vocabulary build_vocabulary();

// JSON list in vocabulary-id order, stored beside checkpoints.
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

// Lowercases and splits punctuation into single-character tokens; the marker
// tokens survive verbatim. detokenize(tokenize(t)) == normalize(t).
std::vector<std::string> normalize_words(const std::string& text);
std::string normalize(const std::string& text);

std::vector<int> tokenize(const Vocabulary& vocab, const std::string& text);
std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids);

// --- prompt span extraction ------------------------------------------------

enum class PromptError { missing_open, missing_close, inverted, empty };

const char* prompt_error_name(PromptError e);

// Token span strictly between the first <PROMPT> and the first </PROMPT>,
// markers excluded. Scan-from-left; when several spans exist the first wins.
struct PromptSpan {
  int begin = 0, end = 0;  // [begin, end)
};

std::variant<PromptSpan, PromptError> find_prompt_span(const std::vector<int>& tokens);

}  // namespace lgvi::lang
