#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace loid {

// Written atomically next to every artifact a command produces; carries
// enough to replay the run byte-for-byte.
struct RunManifest {
    std::string command;
    std::string config_json;  // fully resolved configuration
    uint64_t seed = 0;
    std::vector<std::pair<std::string, uint64_t>> input_checksums;
    std::vector<std::string> artifacts;
    double wall_clock_sec = 0;
    std::string git_describe;
};

void write_manifest(const RunManifest& m, const std::string& path);

std::string git_describe_string();

}  // namespace loid
