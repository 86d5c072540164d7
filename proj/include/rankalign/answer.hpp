#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rankalign {

/// Canonical answer value. Numeric answers are exact rationals; a decimal
/// literal additionally remembers how many decimal places it was written
/// with, so "3.50" and "3.5" compare equal and "1/3" matches "0.33" at the
/// coarser operand's precision. Integers, fractions and percentages are
/// exact. Non-numeric answers are lowercased with whitespace collapsed.
struct NormalizedAnswer {
  enum class Kind { number, text };

  Kind kind = Kind::text;
  std::int64_t num = 0;  // reduced, den > 0
  std::int64_t den = 1;
  int decimals = -1;  // -1 = exact value; >= 1 = written decimal places
  std::string text;

  std::string to_string() const;

  friend bool operator==(const NormalizedAnswer& a, const NormalizedAnswer& b);
  friend bool operator!=(const NormalizedAnswer& a, const NormalizedAnswer& b) {
    return !(a == b);
  }
};

/// Canonicalizes an answer string. Unparseable numerics fall back to text
/// normalization; this never fails.
NormalizedAnswer normalize_answer(std::string_view raw);

/// Default final-answer markers searched by extract_answer.
std::span<const std::string> default_answer_markers();

/// Finds the final answer in generated text: the value after the last
/// marker occurrence wins; without any marker the last standalone numeric
/// token is used; returns nullopt when neither exists.
std::optional<NormalizedAnswer> extract_answer(
    std::string_view generated_text,
    std::span<const std::string> markers = default_answer_markers());

}  // namespace rankalign
