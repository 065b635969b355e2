#pragma once

#include <string>

namespace dmtag {

enum class OutFormat { Text, Csv, Kv };

OutFormat parse_format(const std::string& name);  // InvalidConfig on unknown name

}  // namespace dmtag
