// fkkam: batch driver for the KAM solver, series expansion and validation tasks.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "run_config.hpp"

int main(int argc, char** argv) {
  using namespace fkkam::cli;
  CLI::App app{"Quasi-periodic Frenkel-Kontorova equilibria: KAM solver, Lindstedt series and validation"};
  app.require_subcommand(1);

  struct Invocation {
    std::string config;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Invocation> invocations;
  const Json defaults = default_document();
  for (const auto& [name, run] : commands()) {
    auto* sub = app.add_subcommand(name);
    Invocation& inv = invocations[name];
    sub->add_option("-c,--config", inv.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", inv.sets, "override block.key=value (value parsed as JSON)");
    for (const auto& [block, body] : defaults.items())
      for (const auto& [key, _] : body.items()) {
        const std::string path = block + "." + key;
        sub->add_option("--" + path, inv.flags[path], "override " + path);
      }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error_class=ParseError error=" << e.what() << "\n";
    return kExitParse;
  }

  for (const auto& [name, run] : commands()) {
    auto* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    const Invocation& inv = invocations[name];
    return run_guarded(
        [&] {
          Json doc = inv.config.empty() ? Json::object() : read_json_file(inv.config);
          for (const auto& s : inv.sets) apply_override(doc, s);
          for (const auto& [path, value] : inv.flags)
            if (sub->count("--" + path) > 0) apply_override(doc, path + "=" + value);
          const auto base = inv.config.empty() ? std::filesystem::path() : std::filesystem::path(inv.config).parent_path();
          const RunConfig rc = build_config(doc, base);
          return run(rc, std::cout);
        },
        std::cerr);
  }
  return kExitInternal;
}
