#include "p2t/answer_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <regex>
#include <vector>

namespace p2t {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::optional<std::size_t> last_answer_pos(const std::string& lowered) {
  const auto pos = lowered.rfind("answer");
  if (pos == std::string::npos) return std::nullopt;
  return pos;
}

}  // namespace

ParsedAnswer parse_class(std::string_view response, std::span<const std::string> tokens) {
  const std::string text = lower(response);

  struct Hit {
    std::size_t pos;
    std::size_t token;
  };
  std::vector<Hit> hits;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::string needle = lower(tokens[t]);
    if (needle.empty()) continue;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
      const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]) || !is_word_char(needle.front());
      const std::size_t end = pos + needle.size();
      const bool right_ok =
          end == text.size() || !is_word_char(text[end]) || !is_word_char(needle.back());
      if (left_ok && right_ok) hits.push_back({pos, t});
    }
  }
  if (hits.empty()) return Unparseable{std::string(response)};

  const bool single = std::all_of(hits.begin(), hits.end(),
                                  [&](const Hit& h) { return h.token == hits.front().token; });
  std::size_t chosen = hits.front().token;
  if (!single) {
    if (const auto anchor = last_answer_pos(text)) {
      std::size_t best = std::numeric_limits<std::size_t>::max();
      for (const Hit& h : hits) {
        const std::size_t dist = h.pos > *anchor ? h.pos - *anchor : *anchor - h.pos;
        // On equal distance the later occurrence wins.
        if (dist < best || (dist == best && h.pos > *anchor)) {
          best = dist;
          chosen = h.token;
        }
      }
    } else {
      chosen = std::max_element(hits.begin(), hits.end(),
                                [](const Hit& a, const Hit& b) { return a.pos < b.pos; })
                   ->token;
    }
  }
  return ClassAnswer{chosen, tokens[chosen]};
}

ParsedAnswer parse_feature(std::string_view response, std::span<const std::string> choices) {
  const std::string text = lower(response);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i].empty()) continue;
    if (text.find(lower(choices[i])) == std::string::npos) continue;
    if (!best || choices[i].size() > choices[*best].size()) best = i;
  }
  if (!best) return Unparseable{std::string(response)};
  return FeatureAnswer{*best, choices[*best]};
}

ParsedAnswer parse_number(std::string_view response) {
  static const std::regex kNumber(
      R"([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?|[-+]?\.\d+(?:[eE][-+]?\d+)?)");
  const std::string text(response);

  auto first_number = [&](std::size_t from) -> std::optional<double> {
    std::smatch m;
    auto begin = text.cbegin() + static_cast<std::ptrdiff_t>(from);
    if (!std::regex_search(begin, text.cend(), m, kNumber)) return std::nullopt;
    std::string literal = m.str();
    std::erase(literal, ',');
    if (!literal.empty() && literal.front() == '+') literal.erase(0, 1);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(literal.data(), literal.data() + literal.size(), value);
    if (ec != std::errc() || !std::isfinite(value)) return std::nullopt;
    return value;
  };

  if (const auto anchor = last_answer_pos(lower(response))) {
    if (auto v = first_number(*anchor)) return NumberAnswer{*v};
  }
  if (auto v = first_number(0)) return NumberAnswer{*v};
  return Unparseable{text};
}

}  // namespace p2t
