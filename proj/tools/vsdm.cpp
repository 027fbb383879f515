#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vsdm/commands.hpp"
#include "vsdm/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Variational diffusion models with adaptive linear forward drift"};
  app.require_subcommand(1);

  vsdm::CommandOptions opts;
  std::string config, out, resume;
  std::uint64_t seed = 0;

  using Command = int (*)(const vsdm::CommandOptions&, std::ostream&);
  struct Entry {
    const char* name;
    const char* help;
    Command run;
  };
  const Entry entries[] = {
      {"train", "run the staged training loop and write a checkpoint", vsdm::cmd_train},
      {"sample", "draw samples from a checkpoint", vsdm::cmd_sample},
      {"eval", "straightness and distribution metrics for written samples", vsdm::cmd_eval},
      {"kernel-check", "cross-validate the transition kernel against its oracles", vsdm::cmd_kernel_check},
      {"plot", "render samples and trajectories as SVG", vsdm::cmd_plot},
  };
  Command selected = nullptr;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", config, "INI configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides [run] out)");
    sub->add_option("--seed", seed, "run seed (overrides [run] seed)");
    sub->add_option("--resume", resume, "checkpoint to resume from or sample with");
    sub->callback([&selected, &e] { selected = e.run; });
  }

  CLI11_PARSE(app, argc, argv);

  opts.config = config;
  if (!out.empty()) opts.out = out;
  if (!resume.empty()) opts.resume = resume;
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) opts.seed = seed;

  try {
    return selected(opts, std::cout);
  } catch (const vsdm::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
