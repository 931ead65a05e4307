#include "lgvi/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lgvi/synthgen.hpp"

namespace lgvi::lang {

namespace {
const char* kReserved[] = {"<BOS>", "<EOS>", "<PAD>", "<PROMPT>", "</PROMPT>", "<IMG>"};
constexpr char kPunct[] = ".,!?;:";
}  // namespace

int Vocabulary::id(const std::string& t) const {
  auto it = index.find(t);
  if (it == index.end())
    throw std::out_of_range("out-of-vocabulary word '" + t + "' (corpus/vocab mismatch)");
  return it->second;
}

const std::string& Vocabulary::text(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens[static_cast<size_t>(id)];
}

Vocabulary build_vocabulary() {
  Vocabulary v;
  for (const char* r : kReserved) v.tokens.emplace_back(r);
  std::set<std::string> words;
  for (auto& w : synth::lexicon()) words.insert(w);
  for (const auto& w : words) v.tokens.push_back(w);
  for (size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = static_cast<int>(i);
  return v;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write vocabulary to " + path);
  nlohmann::json j = vocab.tokens;
  f << j.dump(2) << "\n";
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read vocabulary from " + path);
  nlohmann::json j;
  f >> j;
  Vocabulary v;
  v.tokens = j.get<std::vector<std::string>>();
  for (size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = static_cast<int>(i);
  for (size_t i = 0; i < std::size(kReserved); ++i)
    if (v.tokens.size() <= i || v.tokens[i] != kReserved[i])
      throw std::runtime_error("vocabulary file is missing reserved tokens: " + path);
  return v;
}

std::vector<std::string> normalize_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string chunk;
  while (is >> chunk) {
    bool reserved = false;
    for (const char* r : kReserved)
      if (chunk == r) {
        out.push_back(chunk);
        reserved = true;
        break;
      }
    if (reserved) continue;
    std::string word;
    for (char c : chunk) {
      if (std::strchr(kPunct, c)) {
        if (!word.empty()) {
          out.push_back(word);
          word.clear();
        }
        out.push_back(std::string(1, c));
      } else {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
    }
    if (!word.empty()) out.push_back(word);
  }
  return out;
}

std::string normalize(const std::string& text) {
  auto words = normalize_words(text);
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<int> tokenize(const Vocabulary& vocab, const std::string& text) {
  std::vector<int> ids;
  for (const auto& w : normalize_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.text(ids[i]);
  }
  return out;
}

const char* prompt_error_name(PromptError e) {
  switch (e) {
    case PromptError::missing_open: return "missing_open";
    case PromptError::missing_close: return "missing_close";
    case PromptError::inverted: return "inverted";
    case PromptError::empty: return "empty";
  }
  return "?";
}

std::variant<PromptSpan, PromptError> find_prompt_span(const std::vector<int>& tokens) {
  int open = -1, close = -1;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (open < 0 && tokens[i] == Vocabulary::kPromptOpen) open = static_cast<int>(i);
    if (close < 0 && tokens[i] == Vocabulary::kPromptClose) close = static_cast<int>(i);
  }
  if (open < 0) return PromptError::missing_open;
  if (close < 0) return PromptError::missing_close;
  if (close < open) return PromptError::inverted;
  if (close == open + 1) return PromptError::empty;
  return PromptSpan{open + 1, close};
}

}  // namespace lgvi::lang
