// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <functional>

#include "eegfmri/architecture.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/network.hpp"
#include "eegfmri/signal.hpp"

namespace eegfmri {

// JSON forms of the configuration and model description types. Readers
// reject unknown keys so typos in experiment configs surface as
// InvalidArgument instead of silently falling back to defaults.

void to_json(nlohmann::json& j, const LayerHyper& h);
void from_json(const nlohmann::json& j, LayerHyper& h);
void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);
void to_json(nlohmann::json& j, const ArchitectureConfig& a);
void from_json(const nlohmann::json& j, ArchitectureConfig& a);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);
void to_json(nlohmann::json& j, const DataShapes& s);
void from_json(const nlohmann::json& j, DataShapes& s);

/// Everything of a model except parameter values; parameters are listed
/// with their shapes in TrainedModel::parameters() order.
nlohmann::json model_header_to_json(const TrainedModel& m);
/// Rebuilds a model, pulling each parameter block from `next_block`.
TrainedModel model_from_header(const nlohmann::json& header, const std::function<Tensor(const Shape&)>& next_block);

/// Throws InvalidArgument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* context);

}  // namespace eegfmri
