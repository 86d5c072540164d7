#include "rankalign/tokenizer.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace rankalign {

Tokenizer::Tokenizer(std::string alphabet) : alphabet_(std::move(alphabet)) {
  std::string sorted(alphabet_);
  std::sort(sorted.begin(), sorted.end(),
            [](char a, char b) {
              return static_cast<unsigned char>(a) <
                     static_cast<unsigned char>(b);
            });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  alphabet_ = std::move(sorted);
  rebuild_map();
}

Tokenizer Tokenizer::from_corpus(std::span<const std::string> corpus) {
  std::set<unsigned char> chars;
  for (const auto& text : corpus)
    for (char c : text) chars.insert(static_cast<unsigned char>(c));
  std::string alphabet(chars.begin(), chars.end());
  return Tokenizer(std::move(alphabet));
}

void Tokenizer::rebuild_map() {
  for (int& v : char_to_id_) v = -1;
  for (std::size_t i = 0; i < alphabet_.size(); ++i)
    char_to_id_[static_cast<unsigned char>(alphabet_[i])] =
        3 + static_cast<int>(i);
}

TokenSeq Tokenizer::encode(std::string_view text) const {
  TokenSeq out;
  out.reserve(text.size());
  for (char c : text) {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0)
      throw std::invalid_argument(std::string("character not in alphabet: '") +
                                  c + "'");
    out.push_back(id);
  }
  return out;
}

std::string Tokenizer::decode(std::span<const int> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t == kEnd) break;
    if (t == kPad || t == kBegin) continue;
    const int idx = t - 3;
    if (idx < 0 || idx >= static_cast<int>(alphabet_.size()))
      throw std::invalid_argument("token id out of range: " +
                                  std::to_string(t));
    out.push_back(alphabet_[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace rankalign
