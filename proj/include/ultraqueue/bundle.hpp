#pragma once

#include <filesystem>

#include "nlohmann/json.hpp"
#include "ultraqueue/calibrate.hpp"

namespace uq {

/// Versioned model bundle. Empirical samples are stored as sorted arrays and
/// forests as explicit node lists; a load followed by a save reproduces the
/// document byte for byte.
nlohmann::json model_to_json(const CalibratedModel& model);
CalibratedModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const CalibratedModel& model);
CalibratedModel load_model(const std::filesystem::path& path);

/// Reads a JSON document; missing files and parse failures raise InputError.
nlohmann::json read_json(const std::filesystem::path& path, const std::string& what);
void write_json(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1);

}  // namespace uq
