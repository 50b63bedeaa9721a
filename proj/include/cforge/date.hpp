#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace cforge {

/// Calendar date of a newspaper edition.
struct Date {
  int year = 0;
  unsigned month = 0;
  unsigned day = 0;

  /// Parses strict `YYYY-MM-DD`; returns nullopt for anything else or an invalid day.
  static std::optional<Date> parse(std::string_view text);

  std::string to_string() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

}  // namespace cforge
