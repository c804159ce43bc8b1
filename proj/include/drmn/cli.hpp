#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace drmn::cli {

struct FlagSpec {
  std::string key;  // config-file key; the flag is --key with '_' -> '-'
  std::string default_value;
  std::string help;
  bool required = false;
};

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<FlagSpec> flags;
};

/// Every subcommand with its flags. Help output and config validation are
/// both generated from this table.
const std::vector<CommandSpec>& command_registry();
const CommandSpec& command_spec(const std::string& name);

std::string flag_name(const std::string& key);

/// Runs the tool. Returns the process exit code: 0 ok, 2 usage, 3 data,
/// 4 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drmn::cli
