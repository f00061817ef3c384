#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "modesleuth/lsp_model.hpp"

namespace modesleuth {

inline constexpr const char* kModeModelFormat = "mode-model/1";

/// {"format": "mode-model/1", "real_rates": [...], "complex_modes": [[α, ω], ...],
///  "B": [[row 0], ...], "pins": [...], "Lambda": [packed lower triangle, row-major],
///  "channel_means": [...], "meas_noise": [...], "channel_names": [...] (optional)}
nlohmann::json to_json(const ModeModel& model, const std::vector<std::string>& channel_names = {});
ModeModel mode_model_from_json(const nlohmann::json& doc);
std::vector<std::string> channel_names_from_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& rows);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& values);

}  // namespace modesleuth
