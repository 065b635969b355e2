#include "dmtag/format.hpp"

#include "dmtag/error.hpp"

namespace dmtag {

OutFormat parse_format(const std::string& name) {
  if (name == "text") return OutFormat::Text;
  if (name == "csv") return OutFormat::Csv;
  if (name == "kv") return OutFormat::Kv;
  fail(Err::InvalidConfig, "unknown format '" + name + "'");
}

}  // namespace dmtag
