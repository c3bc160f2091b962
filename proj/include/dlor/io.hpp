#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dlor/construct.hpp"
#include "dlor/decompose.hpp"
#include "dlor/experiments.hpp"
#include "dlor/rank1.hpp"
#include "dlor/train.hpp"

namespace dlor {

using Json = nlohmann::json;

// Matrix: {rows, cols, data: [row-major]}; Vector: {len, data}.
Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j);
Vector vector_from_json(const Json& j);

// Activation: {name, c}; rho_c / drho_c are recomputed on load.
Json to_json(const ActivationSpec& a);
ActivationSpec activation_from_json(const Json& j);

Json to_json(const Rank1Net& net);
Rank1Net rank1_from_json(const Json& j);

Json to_json(const MultiplicativeFactorization& f);
MultiplicativeFactorization factorization_from_json(const Json& j);

Json to_json(const AdditiveSplit& s);

Json to_json(const DeepBlockPlan& p);
DeepBlockPlan deep_plan_from_json(const Json& j);
Json to_json(const WideBlockPlan& p);
WideBlockPlan wide_plan_from_json(const Json& j);

Json to_json(const TrainableNet& net);
TrainableNet net_from_json(const Json& j);

/// Writes to a temp file in the same directory, then renames into place.
void atomic_write(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

std::string format_double(double v);  // shortest round-trip decimal

/// One matrix row per line, '.' decimals, '\n' endings, no header.
std::string matrix_csv(const Matrix& m);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Dataset CSV with header x_1..x_d,z; columns are features then target.
struct CsvDataset {
  Matrix x_cols;  // d x M
  Vector z;
};
CsvDataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const CsvDataset& data);

std::string loss_curve_csv(const std::vector<LossPoint>& curve);
std::string sweep_csv(const SweepResult& sweep);
std::string summary_csv(const ExperimentSummary& summary, bool with_epochs);

}  // namespace dlor
