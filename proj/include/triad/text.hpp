#pragma once
// Small text utilities shared across the engine: whitespace trimming,
// NFC normalization (texts are stored as given and compared normalized),
// stable hashing for script keys and fixture digests, and the {placeholder}
// template renderer used by all prompt templates.

#include <cstdint>
#include <map>
#include <string>

namespace triad {

std::string trim(const std::string& s);

// Unicode NFC via ICU. Invalid UTF-8 is passed through unchanged.
std::string nfc_normalize(const std::string& utf8);

// FNV-1a 64-bit, rendered as 8 lowercase hex chars. Used for scripted
// backend match keys and mock-fixture argument digests.
std::string fnv1a64_hex8(const std::string& s);

std::string sha256_hex(const std::string& s);

// Replaces every "{name}" occurrence with vars.at(name); unknown
// placeholders are left verbatim so template typos are visible in output.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& vars);

std::string read_file(const std::string& path); // throws ConfigInvalid

} // namespace triad
