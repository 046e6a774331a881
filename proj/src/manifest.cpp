#include "gnnpp/manifest.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gnnpp {

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read " + path);
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf), in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

namespace {

std::string trim(std::string_view s) {
    const char* ws = " \t\r";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string_view::npos) return "";
    const auto b = s.find_last_not_of(ws);
    return std::string(s.substr(a, b - a + 1));
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read config file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty())
            throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
        out[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return out;
}

void RunManifest::add_checksum(const std::string& path) {
    dataset_checksums[path] = fnv1a64_file(path);
}

void write_manifest(const RunManifest& m, const std::string& dir) {
    nlohmann::json j;
    j["command"] = m.command;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["dataset_checksums"] = m.dataset_checksums;
    j["outputs"] = m.outputs;
    j["elapsed_seconds"] = m.elapsed_seconds;
    const std::string path = dir + "/manifest.json";
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.version = j.at("version").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = j.at("config").get<std::map<std::string, std::string>>();
        m.dataset_checksums =
            j.at("dataset_checksums").get<std::map<std::string, std::uint64_t>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return m;
}

}  // namespace gnnpp
