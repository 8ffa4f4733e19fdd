#pragma once
#include <json.hpp>

#include <string_view>

namespace autoresearch::protocol {

// Parses the first {...} object in text, tolerating what models tend to emit:
// code fences, single-quoted strings, bare keys, trailing commas, raw
// newlines inside strings, unknown escapes, and True/False/None literals.
// Throws Error(MalformedInput) with the offset of the problem.
nlohmann::json parse_lenient_object(std::string_view text);

} // namespace autoresearch::protocol
