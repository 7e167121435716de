#pragma once

#include <map>
#include <string>

namespace fer::cli {

// Flat `key = value` configuration, one pair per line, `#` starts a comment.
// Whitespace around keys and values is trimmed. Later keys override earlier
// ones; CLI flags override file keys.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> load_config(const std::string& path);

}  // namespace fer::cli
