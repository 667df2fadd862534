// Copyright 2026 The offload-planner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "offload/model.hpp"

namespace offload {

// Insertion-ordered so serialized documents are canonical.
using Json = nlohmann::ordered_json;

// Malformed input: bad JSON, unknown or missing fields, broken invariants.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Keys beginning with '$' are annotations and are skipped by every reader.

Json to_json(const ModelSpec& m);
Json to_json(const Workload& w);
Json to_json(const HardwareProfile& hw);
Json to_json(const Policy& p);
Json to_json(const QuantConfig& q);
Json to_json(const ByteReport& r);

ModelSpec model_from_json(const Json& j);
Workload workload_from_json(const Json& j);
HardwareProfile hardware_from_json(const Json& j);
Policy policy_from_json(const Json& j);
QuantConfig quant_from_json(const Json& j);

// Non-finite values are written as the strings "inf" / "-inf" / "nan".
Json number_json(double v);

Json parse_json_text(const std::string& text, const std::string& origin);
Json read_json_file(const std::string& path);

// Deterministic rendering used for every JSON output: two-space indent, trailing newline.
std::string dump(const Json& j);

}  // namespace offload
