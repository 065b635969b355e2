#pragma once

// Formatting helpers shared by the report renderers. NaN renders as "n.a."
// in every format; kv values carry full precision, text tables round.

#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

namespace dmtag::detail {

inline std::string num(double v, int prec) {
  if (std::isnan(v)) return "n.a.";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string kv_num(double v) {
  if (std::isnan(v)) return "n.a.";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Lowercased label with non-alphanumeric runs squeezed to single '_', for
// machine-readable keys ("Y/N Question" -> "y_n_question").
inline std::string kv_slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace dmtag::detail
