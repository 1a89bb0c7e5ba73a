#pragma once

#include "hedge/ad/matrix.hpp"
#include "hedge/nn/network.hpp"
#include "hedge/nn/optimizer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace hedge::nn {

// JSON layout:
//   matrix    {"rows": r, "cols": c, "data": [row-major doubles]}
//   spec      {"input_dim", "hidden", "output_dim", "batchnorm", "bn_momentum", "bn_eps"}
//   params    {"linear": [{"weight", "bias"}...], "bn": [{"enabled", "scale", "shift",
//              "running_mean", "running_var"}...]}
//   optimizer {"algorithm": "adam"|"sgd", "beta1", "beta2", "eps", "lr", "steps",
//              "adam_steps", "m": [...], "v": [...]}
// Doubles are written in shortest round-trip form, so a load reproduces every bit.

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const NetSpec& spec);
NetSpec spec_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const ParamStore& params);
ParamStore params_from_json(const nlohmann::json& j, const NetSpec& spec);

nlohmann::json optimizer_to_json(const Optimizer& opt);
Optimizer optimizer_from_json(const nlohmann::json& j);

/// Writes pretty JSON; throws std::runtime_error when the file cannot be written.
void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace hedge::nn
