#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <locale>
#include <sstream>
#include <string>
#include <string_view>

#include "dvsimc/errors.hpp"

namespace dvsimc {

/// 17 significant digits: enough for an exact binary64 round trip.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_real(std::string_view text, std::string_view what) {
  std::string s(text);
  const auto first = s.find_first_not_of(" \t\r");
  const auto last = s.find_last_not_of(" \t\r");
  if (first == std::string::npos) fail(ErrorKind::invalid_input, std::string(what) + ": empty number");
  s = s.substr(first, last - first + 1);
  if (s == "nan" || s == "inf" || s == "-inf")
    fail(ErrorKind::invalid_input, std::string(what) + ": non-finite value '" + s + "'");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    fail(ErrorKind::invalid_input, std::string(what) + ": cannot parse '" + s + "' as a real number");
  return v;
}

inline long long parse_integer(std::string_view text, std::string_view what) {
  std::string s(text);
  const auto first = s.find_first_not_of(" \t\r");
  const auto last = s.find_last_not_of(" \t\r");
  if (first == std::string::npos) fail(ErrorKind::invalid_input, std::string(what) + ": empty integer");
  s = s.substr(first, last - first + 1);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::invalid_input, std::string(what) + ": cannot parse '" + s + "' as an integer");
  return v;
}

}  // namespace dvsimc
