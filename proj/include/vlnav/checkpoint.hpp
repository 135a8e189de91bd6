#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlnav/gradcheck.hpp"

namespace vlnav {

inline constexpr int kCheckpointFormat = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// {"format": 1, "meta": {...}, "params": {path: {"shape": [r, c], "data": [...]}}}
nlohmann::json checkpoint_to_json(const nlohmann::json& meta, std::span<const NamedParam> params);

/// Fills every listed parameter from a checkpoint document; shapes must match.
void load_params(const nlohmann::json& doc, std::span<const NamedParam> params);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// One compact JSON document per line. Blank lines are skipped on read.
void write_jsonl_file(const std::filesystem::path& path, std::span<const nlohmann::json> docs);
std::vector<nlohmann::json> read_jsonl_file(const std::filesystem::path& path);

}  // namespace vlnav
