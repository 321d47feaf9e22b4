// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "topomo/skeleton/skeleton.hpp"

namespace topomo {

// {"name", "species", "joints": [{"name", "parent", "offset": [x, y, z]}]}
// Root parent is written as -1; null is accepted on read.
nlohmann::json skeleton_to_json_value(const SkeletonGraph& s);
SkeletonGraph skeleton_from_json_value(const nlohmann::json& j);

}  // namespace topomo
