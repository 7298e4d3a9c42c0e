#pragma once

// Flat `key = value` configuration with `#` comments. Keys are namespaced
// (env.*, ppo.*, ddpg.*, run.*); unknown keys are rejected and every key
// has a default.

#include <filesystem>
#include <string>
#include <vector>

#include "invrec/pipeline.hpp"

namespace invrec::io {

pipeline::Settings default_settings();

// Parses text over the defaults and validates the result. `source` names
// the input in error messages.
pipeline::Settings parse_config_text(const std::string& text, const std::string& source = "<config>");
pipeline::Settings parse_config(const std::filesystem::path& path);

// Applies one key/value on top of `settings` (no validation).
void set_config_value(pipeline::Settings& settings, const std::string& key, const std::string& value);

std::vector<std::string> config_keys();

// Every key with its current value, one `key = value` per line.
std::string render_config(const pipeline::Settings& settings);

}  // namespace invrec::io
