#pragma once

// TOML training configuration. Keys match TrainConfig field names; `lr_decay`
// is a table with `factor` and `every_steps`.

#include <filesystem>
#include <string_view>

#include "core/train.hpp"

namespace fpp {

/// Overlays the file's keys onto `base`. Syntax errors carry file:line:column.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base);
TrainConfig parse_train_config(std::string_view toml_text, TrainConfig base, std::string_view source_name = "<config>");

}  // namespace fpp
