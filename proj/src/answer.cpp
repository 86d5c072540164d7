#include "rankalign/answer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <stdexcept>

namespace rankalign {

namespace {

using i128 = __int128;

constexpr int kMaxDigits = 18;

i128 pow10_128(int n) {
  i128 v = 1;
  for (int i = 0; i < n; ++i) v *= 10;
  return v;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Parses an entire token of the form [sign]digits[(.digits)|(/digits)][%].
std::optional<NormalizedAnswer> parse_numeric(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  bool negative = false;
  if (s[i] == '+' || s[i] == '-') {
    negative = s[i] == '-';
    ++i;
  }
  auto read_digits = [&](std::string_view& out) -> bool {
    const std::size_t start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == start || i - start > kMaxDigits) return false;
    out = s.substr(start, i - start);
    return true;
  };
  std::string_view int_part;
  if (!read_digits(int_part)) return std::nullopt;

  std::string_view frac_part, den_part;
  bool is_decimal = false, is_fraction = false;
  if (i < s.size() && s[i] == '.') {
    ++i;
    if (!read_digits(frac_part)) return std::nullopt;
    is_decimal = true;
  } else if (i < s.size() && s[i] == '/') {
    ++i;
    if (!read_digits(den_part)) return std::nullopt;
    is_fraction = true;
  }
  bool percent = false;
  if (i < s.size() && s[i] == '%') {
    percent = true;
    ++i;
  }
  if (i != s.size()) return std::nullopt;
  if (int_part.size() + frac_part.size() > static_cast<std::size_t>(kMaxDigits))
    return std::nullopt;

  auto digits_value = [](std::string_view d) {
    std::int64_t v = 0;
    for (char c : d) v = v * 10 + (c - '0');
    return v;
  };

  std::int64_t num = digits_value(int_part);
  std::int64_t den = 1;
  int decimals = -1;
  if (is_decimal) {
    const int dp = static_cast<int>(frac_part.size());
    std::int64_t scale = 1;
    for (int k = 0; k < dp; ++k) scale *= 10;
    num = num * scale + digits_value(frac_part);
    den = scale;
    decimals = dp;
  } else if (is_fraction) {
    den = digits_value(den_part);
    if (den == 0) return std::nullopt;
  }
  if (percent) {
    if (den > (INT64_MAX / 100)) return std::nullopt;
    den *= 100;
    if (decimals >= 0) decimals += 2;
  }
  if (negative) num = -num;

  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  NormalizedAnswer out;
  out.kind = NormalizedAnswer::Kind::number;
  out.num = num;
  out.den = den;
  out.decimals = decimals;
  return out;
}

// Rounds num/den to `places` decimal digits, half away from zero.
i128 round_scaled(std::int64_t num, std::int64_t den, int places) {
  i128 scaled = i128(num) * pow10_128(places);
  i128 q = scaled / den;
  i128 rem = scaled % den;
  if (rem < 0) rem = -rem;
  if (2 * rem >= den) q += scaled < 0 ? -1 : 1;
  return q;
}

struct NumericToken {
  std::size_t pos = 0;
  std::size_t len = 0;
};

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Standalone numeric tokens: number syntax bounded by non-word characters.
std::vector<NumericToken> find_numeric_tokens(std::string_view text) {
  std::vector<NumericToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    const bool sign_start =
        (c == '+' || c == '-') && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!std::isdigit(static_cast<unsigned char>(c)) && !sign_start) {
      ++i;
      continue;
    }
    if (i > 0 && is_word_char(text[i - 1])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    if (sign_start) ++j;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
      ++j;
    if ((j < text.size() && (text[j] == '.' || text[j] == '/')) &&
        j + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
      ++j;
      while (j < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[j])))
        ++j;
    }
    if (j < text.size() && text[j] == '%') ++j;
    if (j < text.size() && is_word_char(text[j])) {
      // glued to a word ("42x"), not standalone; skip past it
      while (j < text.size() && is_word_char(text[j])) ++j;
      i = j;
      continue;
    }
    out.push_back({i, j - i});
    i = j;
  }
  return out;
}

// Strips one trailing sentence punctuation mark (ASCII or the UTF-8
// ideographic full stop).
std::string_view strip_trailing_punct(std::string_view v) {
  while (true) {
    v = trim(v);
    if (v.empty()) return v;
    const char last = v.back();
    if (last == '.' || last == '!' || last == '?' || last == ',' ||
        last == ';' || last == ':') {
      v.remove_suffix(1);
      continue;
    }
    if (v.size() >= 3) {
      const std::string_view tail = v.substr(v.size() - 3);
      if (tail == "\xE3\x80\x82" /* 。 */ || tail == "\xEF\xBC\x81" /* ！ */ ||
          tail == "\xEF\xBC\x8C" /* ， */) {
        v.remove_suffix(3);
        continue;
      }
    }
    return v;
  }
}

}  // namespace

std::string NormalizedAnswer::to_string() const {
  if (kind == Kind::text) return text;
  if (decimals < 0) {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }
  if (decimals == 0) return std::to_string(num / den);
  const i128 scaled = round_scaled(num, den, decimals);
  i128 mag = scaled < 0 ? -scaled : scaled;
  const i128 scale = pow10_128(decimals);
  const i128 int_part = mag / scale;
  i128 frac = mag % scale;
  std::string frac_digits(static_cast<std::size_t>(decimals), '0');
  for (int k = decimals - 1; k >= 0; --k) {
    frac_digits[static_cast<std::size_t>(k)] =
        static_cast<char>('0' + static_cast<int>(frac % 10));
    frac /= 10;
  }
  std::string out;
  if (scaled < 0) out.push_back('-');
  out += std::to_string(static_cast<long long>(int_part));
  out.push_back('.');
  out += frac_digits;
  return out;
}

bool operator==(const NormalizedAnswer& a, const NormalizedAnswer& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == NormalizedAnswer::Kind::text) return a.text == b.text;
  if (a.decimals < 0 && b.decimals < 0) {
    return i128(a.num) * b.den == i128(b.num) * a.den;
  }
  // compare at the coarser written precision
  int places;
  if (a.decimals < 0)
    places = b.decimals;
  else if (b.decimals < 0)
    places = a.decimals;
  else
    places = std::min(a.decimals, b.decimals);
  return round_scaled(a.num, a.den, places) ==
         round_scaled(b.num, b.den, places);
}

NormalizedAnswer normalize_answer(std::string_view raw) {
  const std::string_view trimmed = trim(raw);
  if (auto num = parse_numeric(trimmed)) return *num;
  NormalizedAnswer out;
  out.kind = NormalizedAnswer::Kind::text;
  out.text = normalize_text(trimmed);
  return out;
}

std::span<const std::string> default_answer_markers() {
  static const std::vector<std::string> markers = {"答案", "Answer", "answer"};
  return markers;
}

std::optional<NormalizedAnswer> extract_answer(
    std::string_view generated_text, std::span<const std::string> markers) {
  // all marker occurrences, latest first
  std::vector<std::pair<std::size_t, std::size_t>> hits;  // pos, marker len
  for (const auto& marker : markers) {
    std::size_t pos = generated_text.find(marker);
    while (pos != std::string_view::npos) {
      hits.emplace_back(pos, marker.size());
      pos = generated_text.find(marker, pos + 1);
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  for (const auto& [pos, len] : hits) {
    std::string_view rest = generated_text.substr(pos + len);
    std::size_t k = 0;
    while (k < rest.size()) {
      const char c = rest[k];
      if (c == ' ' || c == '\t' || c == ':' || c == '=' || c == '-') {
        ++k;
        continue;
      }
      if (rest.substr(k).starts_with("\xEF\xBC\x9A" /* ： */)) {
        k += 3;
        continue;
      }
      break;
    }
    rest = rest.substr(k);
    const std::size_t eol = rest.find('\n');
    std::string_view value = eol == std::string_view::npos
                                 ? rest
                                 : rest.substr(0, eol);
    value = strip_trailing_punct(value);
    if (value.empty()) continue;
    if (auto num = parse_numeric(value)) return *num;
    const auto tokens = find_numeric_tokens(value);
    if (!tokens.empty()) {
      if (auto num = parse_numeric(value.substr(tokens[0].pos, tokens[0].len)))
        return *num;
    }
    return normalize_answer(value);
  }

  // no usable marker: fall back to the last standalone numeric token
  const auto tokens = find_numeric_tokens(generated_text);
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
    if (auto num = parse_numeric(generated_text.substr(it->pos, it->len)))
      return *num;
  }
  return std::nullopt;
}

}  // namespace rankalign
