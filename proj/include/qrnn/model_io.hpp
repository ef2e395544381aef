// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "qrnn/losses.hpp"
#include "qrnn/nn.hpp"

namespace qrnn {

inline constexpr int kModelFormatVersion = 1;

/// A model plus the objective it was trained with, which tells consumers how to read its
/// outputs (e.g. composite heads need the cumulative-softplus reconstruction).
struct ModelFile {
  MlpModel model;
  std::optional<Objective> objective;
};

/// JSON text: {"version":1,"input_dim","output_dim","layers":[...],"objective":{...}}.
/// Doubles are written in shortest round-trip form, so load(save(m)) is bit-exact.
std::string model_to_json(const MlpModel& model, const Objective* objective = nullptr);
ModelFile model_from_json(const std::string& text);

void save_model(const MlpModel& model, const std::filesystem::path& path,
                const Objective* objective = nullptr);
ModelFile load_model(const std::filesystem::path& path);

/// Applies the objective's output transform (composite reconstruction) to raw network output.
Matrix decode_output(const Matrix& raw, const std::optional<Objective>& objective);

}  // namespace qrnn
