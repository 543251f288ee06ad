// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "vcwe/trainer.hpp"

namespace vcwe::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Sets one TrainConfig field from text. Keys use dashes ("learning-rate");
/// underscores are accepted too. Throws DomainError for unknown keys or
/// unparsable values.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);

/// key=value lines; blank lines and lines starting with '#' are ignored.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Runs the command line `args` (args[0] is the program name). Logs and
/// diagnostics go to `err`, results to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vcwe::cli
