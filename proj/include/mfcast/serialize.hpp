#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mfcast/evalx.hpp"

namespace mfcast {

using json = nlohmann::json;

// Matrices are stored as {"rows": r, "cols": c, "data": [row-major values]}.
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const RawSeries& raw);
RawSeries raw_series_from_json(const json& j);

json to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j);

json to_json(const ModelParams& params);
ModelParams model_params_from_json(const json& j);

/// Tree (or count) structure plus, for leaves, both parameter sets.
json to_json(const Partition& partition);
Partition partition_from_json(const json& j);

json to_json(const HorizonArtifacts& art);
HorizonArtifacts horizon_artifacts_from_json(const json& j);

/// nrmse per record; squared-error series are not persisted.
json to_json(const EvalResult& result);
EvalResult eval_result_from_json(const json& j);

json to_json(const QSweepRow& row);
QSweepRow qsweep_row_from_json(const json& j);

/// Two-space indented dump with a trailing newline.
void write_json(const json& j, const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

}  // namespace mfcast
