// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#include "offload/presets.hpp"

#include <filesystem>

#include "preset_data.hpp"

namespace offload {

namespace {

const PresetEntry* find(PresetKind kind, std::string_view name) {
    for (const auto& e : kPresets) {
        if (e.kind == kind && e.name == name) return &e;
    }
    return nullptr;
}

Json resolve(PresetKind kind, const std::string& name_or_path) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(name_or_path, ec)) return read_json_file(name_or_path);
    if (const auto* e = find(kind, name_or_path)) {
        return parse_json_text(std::string(e->text), "preset " + name_or_path);
    }
    throw InputError("no such file or preset: " + name_or_path);
}

}  // namespace

std::optional<std::string_view> preset_text(PresetKind kind, std::string_view name) {
    if (const auto* e = find(kind, name)) return e->text;
    return std::nullopt;
}

std::vector<std::string> preset_names(PresetKind kind) {
    std::vector<std::string> out;
    for (const auto& e : kPresets) {
        if (e.kind == kind) out.emplace_back(e.name);
    }
    return out;
}

ModelSpec load_model(const std::string& name_or_path) {
    return model_from_json(resolve(PresetKind::model, name_or_path));
}

HardwareProfile load_hardware(const std::string& name_or_path) {
    return hardware_from_json(resolve(PresetKind::hardware, name_or_path));
}

Policy load_policy(const std::string& path) { return policy_from_json(read_json_file(path)); }

}  // namespace offload
