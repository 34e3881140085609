#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>

namespace p2t {

struct ClassAnswer {
  std::size_t index = 0;  // into the offered token list
  std::string token;
  bool operator==(const ClassAnswer&) const = default;
};

struct FeatureAnswer {
  std::size_t index = 0;  // into the offered choice list
  std::string name;
  bool operator==(const FeatureAnswer&) const = default;
};

struct NumberAnswer {
  double value = 0.0;
  bool operator==(const NumberAnswer&) const = default;
};

struct Unparseable {
  std::string raw;
  bool operator==(const Unparseable&) const = default;
};

using ParsedAnswer = std::variant<ClassAnswer, FeatureAnswer, NumberAnswer, Unparseable>;

inline bool is_unparseable(const ParsedAnswer& a) { return std::holds_alternative<Unparseable>(a); }

// Case-insensitive, whole-word token search. One distinct token wins outright;
// with several, the occurrence closest to the last "Answer" wins (the last
// occurrence when the response never says "Answer").
ParsedAnswer parse_class(std::string_view response, std::span<const std::string> tokens);

// Longest choice that occurs in the response, case-insensitively.
ParsedAnswer parse_feature(std::string_view response, std::span<const std::string> choices);

// First decimal literal after the last "Answer", else the first anywhere.
// Thousands separators ("22,900.94") are accepted.
ParsedAnswer parse_number(std::string_view response);

}  // namespace p2t
