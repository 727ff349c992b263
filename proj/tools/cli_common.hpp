#pragma once

#include "didb/error.hpp"
#include "didb/store.hpp"

#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <string>

namespace didb::cli {

inline nlohmann::json error_json(const std::exception& e) {
    nlohmann::json err = {{"message", e.what()}};
    if (const auto* de = dynamic_cast<const Error*>(&e)) err["code"] = to_string(de->code());
    return {{"ok", false}, {"error", err}};
}

/// Writes `report` to `path` when one was given. Never throws.
inline void write_report(const std::string& path, const nlohmann::json& report) {
    if (path.empty()) return;
    try {
        write_file_atomic(path, report.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "cannot write report " << path << ": " << e.what() << "\n";
    }
}

}  // namespace didb::cli
