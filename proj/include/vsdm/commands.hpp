#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "vsdm/config.hpp"

namespace vsdm {

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> resume;
};

// Config from file with the command-line overrides applied.
RunConfig resolve_config(const CommandOptions& opts);

// Each command returns a process exit code and reports progress on `log`.
int cmd_train(const CommandOptions& opts, std::ostream& log);
int cmd_sample(const CommandOptions& opts, std::ostream& log);
int cmd_eval(const CommandOptions& opts, std::ostream& log);
int cmd_kernel_check(const CommandOptions& opts, std::ostream& log);
int cmd_plot(const CommandOptions& opts, std::ostream& log);

}  // namespace vsdm
