#include "vlnav/checkpoint.hpp"

#include <fstream>

namespace vlnav {

using nlohmann::json;

json checkpoint_to_json(const json& meta, std::span<const NamedParam> params) {
    json doc;
    doc["format"] = kCheckpointFormat;
    doc["meta"] = meta;
    json& ps = doc["params"];
    ps = json::object();
    for (const auto& np : params) {
        const Matrix& m = np.param->value;
        ps[np.name] = {{"shape", {m.rows(), m.cols()}}, {"data", m.data()}};
    }
    return doc;
}

void load_params(const json& doc, std::span<const NamedParam> params) {
    if (!doc.contains("format") || doc.at("format").get<int>() != kCheckpointFormat) {
        throw CheckpointError("unsupported checkpoint format");
    }
    const json& ps = doc.at("params");
    for (const auto& np : params) {
        if (!ps.contains(np.name)) {
            throw CheckpointError("checkpoint is missing parameter " + np.name);
        }
        const json& entry = ps.at(np.name);
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        auto data = entry.at("data").get<std::vector<double>>();
        Matrix& m = np.param->value;
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols() || data.size() != m.size()) {
            throw CheckpointError("shape mismatch for parameter " + np.name);
        }
        m = Matrix(shape[0], shape[1], std::move(data));
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << doc.dump() << '\n';
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    return json::parse(in);
}

void write_jsonl_file(const std::filesystem::path& path, std::span<const json> docs) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& d : docs) {
        out << d.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

std::vector<json> read_jsonl_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::vector<json> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            docs.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return docs;
}

}  // namespace vlnav
