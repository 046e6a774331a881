#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gnnpp/common.hpp"

namespace gnnpp {

// FNV-1a over the raw file bytes. ParseError when the file cannot be read.
std::uint64_t fnv1a64_file(const std::string& path);

// Flat key = value text: blank lines and '#' comments ignored, whitespace
// around keys and values trimmed. ParseError on a line without '='.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Provenance record for one command run. Every output directory holds
// exactly one manifest.json; the config snapshot plus the seed are enough
// to repeat the run.
struct RunManifest {
    std::string command;
    std::string version = kVersion;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;              // effective settings
    std::map<std::string, std::uint64_t> dataset_checksums; // file -> fnv1a64
    std::vector<std::string> outputs;                       // files written alongside
    double elapsed_seconds = 0.0;

    void add_checksum(const std::string& path);
};

void write_manifest(const RunManifest& m, const std::string& dir);
RunManifest read_manifest(const std::string& path);

}  // namespace gnnpp
