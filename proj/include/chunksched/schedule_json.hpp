// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "chunksched/schedule.hpp"
#include "json.hpp"

namespace chunksched {

using Json = nlohmann::json;

// Field names are part of the file format; see docs in README.md.
void to_json(Json& j, const TensorSpec& t);
void from_json(const Json& j, TensorSpec& t);
void to_json(Json& j, const Region& r);
void from_json(const Json& j, Region& r);
void to_json(Json& j, const Chunk& c);
void from_json(const Json& j, Chunk& c);
void to_json(Json& j, const OpRef& d);
void from_json(const Json& j, OpRef& d);
void to_json(Json& j, const CommOp& op);
void from_json(const Json& j, CommOp& op);
void to_json(Json& j, const CommSchedule& s);
void from_json(const Json& j, CommSchedule& s);

// Throws ParseError with a readable message on malformed input.
CommSchedule schedule_from_string(const std::string& text);
std::string schedule_to_string(const CommSchedule& s);

// File helpers shared by every JSON document the tools read or write.
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace chunksched
