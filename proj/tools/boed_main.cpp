#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "boed/errors.hpp"
#include "boed/harness/commands.hpp"

extern char** environ;

int main(int argc, char** argv) {
  using namespace boed;
  CLI::App app{"Sequential Bayesian experimental design: EIG estimators, amortised posteriors and RL design policies"};
  app.require_subcommand(0, 1);
  std::string config_path, out;
  std::int64_t seed = -1;
  std::size_t workers = 0;
  bool dump = false;
  app.add_option("--config", config_path, "JSON config file or a run manifest");
  app.add_option("--seed", seed, "Replaces the seed list with this single seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", workers, "Worker threads for seeds, rows and rollouts");
  app.add_flag("--dump-config", dump, "Print the resolved config and exit");
  for (const auto& name : harness::command_names()) {
    app.add_subcommand(name, "Run the " + name + " command");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = harness::load_config(config_path, harness::environment_overrides(environ));
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
    if (!out.empty()) cfg.out = out;
    if (workers > 0) cfg.workers = workers;
    if (dump) {
      std::cout << harness::to_json(cfg).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 2;
    }
    const auto m = harness::run_command(app.get_subcommands().front()->get_name(), cfg, std::cout);
    return harness::manifest_reports_divergence(m) ? 3 : 0;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const CapabilityError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
