#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "freqrand/error.hpp"

namespace freqrand::config {

// FNV-1a over the canonical (key-sorted, compact) JSON dump. Identifies a
// run configuration for reproducibility stamps; not cryptographic.
inline std::string hash_json(const nlohmann::json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Reject unknown keys so config typos fail loudly with the offending name.
inline void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                               const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError(where + ": unknown field \"" + key + "\"");
    }
}

template <typename T>
T require_field(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing required field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": field \"" + key + "\" has the wrong type");
    }
}

template <typename T>
T optional_field(const nlohmann::json& j, const std::string& key, const T& fallback,
                 const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": field \"" + key + "\" has the wrong type");
    }
}

} // namespace freqrand::config
