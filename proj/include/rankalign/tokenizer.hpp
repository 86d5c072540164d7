#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rankalign {

using TokenSeq = std::vector<int>;

/// Character-level tokenizer with fixed special ids pad=0, begin=1, end=2.
/// Content characters map to 3 + index within the sorted alphabet.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBegin = 1;
  static constexpr int kEnd = 2;

  Tokenizer() = default;
  explicit Tokenizer(std::string alphabet);

  /// Builds the alphabet from the sorted unique characters of the corpus.
  static Tokenizer from_corpus(std::span<const std::string> corpus);

  int vocab_size() const { return 3 + static_cast<int>(alphabet_.size()); }
  const std::string& alphabet() const { return alphabet_; }

  /// Throws on characters outside the alphabet.
  TokenSeq encode(std::string_view text) const;

  /// Skips pad/begin tokens and stops at the first end token.
  std::string decode(std::span<const int> tokens) const;

 private:
  std::string alphabet_;
  int char_to_id_[256];
  void rebuild_map();
};

}  // namespace rankalign
