#pragma once

#include <filesystem>

#include "json.hpp"

#include "regcal/calibrator.hpp"
#include "regcal/metrics.hpp"

namespace regcal {

//! Single JSON document holding everything needed to predict: regressor
//! state, standardizer, projection, stored calibration points and residuals,
//! plus an echo of the calibration config. Doubles round-trip exactly.
nlohmann::json model_to_json(const CalibratedModel& model);
CalibratedModel model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const CalibratedModel& model);
CalibratedModel load_model(const std::filesystem::path& path);

nlohmann::json report_to_json(const MetricReport& report);

} // namespace regcal
