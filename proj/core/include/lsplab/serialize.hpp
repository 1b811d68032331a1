#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace lsplab::io {

/// Writes doubles as little-endian float32, the on-disk number format for
/// datasets, checkpoints and reversed-trigger artifacts.
void write_f32(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f32(const std::filesystem::path& path);

/// float32 little-endian <-> base64, for arrays embedded in JSON documents.
std::string encode_f32_base64(const std::vector<double>& values);
std::vector<double> decode_f32_base64(const std::string& text);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lsplab::io
