// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "offload/json_io.hpp"
#include "offload/model.hpp"

namespace offload {

enum class PresetKind { model, hardware };

// Raw JSON text of a built-in preset, if one exists under that name.
std::optional<std::string_view> preset_text(PresetKind kind, std::string_view name);
std::vector<std::string> preset_names(PresetKind kind);

// A path to an existing file wins over a preset of the same name.
ModelSpec load_model(const std::string& name_or_path);
HardwareProfile load_hardware(const std::string& name_or_path);
Policy load_policy(const std::string& path);

}  // namespace offload
