#include "loid/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "loid/common.hpp"

namespace loid {

using nlohmann::json;

void write_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["command"] = m.command;
    j["seed"] = m.seed;
    try {
        j["config"] = json::parse(m.config_json);
    } catch (const json::exception&) {
        j["config"] = m.config_json;
    }
    json inputs = json::object();
    for (const auto& [p, sum] : m.input_checksums) {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)sum);
        inputs[p] = buf;
    }
    j["input_checksums"] = inputs;
    j["artifacts"] = m.artifacts;
    j["wall_clock_sec"] = m.wall_clock_sec;
    j["git_describe"] = m.git_describe;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot open '" + tmp + "' for writing");
        out << j.dump(2) << '\n';
        if (!out) throw DataError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::string git_describe_string() {
    FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (pipe == nullptr) return "unknown";
    char buf[256];
    std::string out;
    while (fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

}  // namespace loid
