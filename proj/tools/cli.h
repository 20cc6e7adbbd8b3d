/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef GRM_TOOLS_CLI_H_
#define GRM_TOOLS_CLI_H_

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace grm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataOrConfig = 2, kNumerical = 3 };

// Setting key -> value text, as resolved from defaults, a config file and
// command-line flags (later sources win).
using Settings = std::map<std::string, std::string>;

// key=value lines; '#' starts a comment; values may be double-quoted.
// Unknown keys raise a config error.
Settings ParseConfigText(std::string_view text);

// Every recognised key with its default.
const Settings& DefaultSettings();

// args[0] is the program name, as in argv.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grm::cli

#endif  // GRM_TOOLS_CLI_H_
