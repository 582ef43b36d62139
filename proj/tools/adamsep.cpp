// Command-line front end: adamsep [command] --config FILE [--workers K] [--out DIR]
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "adamsep/cli.hpp"
#include "adamsep/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adamsep: Adam vs SGD high-probability experiments"};
  std::string command, config_path, out;
  std::size_t workers = 0;
  app.add_option("command", command, "optional; must match the config's command");
  app.add_option("--config", config_path, "JSON configuration file")->required();
  app.add_option("--workers", workers, "worker threads (default: ADAMSEP_WORKERS or 1)");
  app.add_option("--out", out, "override output.directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : adamsep::kExitConfig;
  }
  try {
    auto cfg = adamsep::parse_config(config_path);
    if (!command.empty() && cfg.command != command) {
      std::cerr << "configuration error: config is for '" << cfg.command << "', not '" << command << "'\n";
      return adamsep::kExitConfig;
    }
    if (workers == 0) workers = adamsep::default_workers();
    const int rc = adamsep::execute(cfg, workers, out);
    if (rc == adamsep::kExitOk) std::cout << adamsep::output_dir(cfg, out).string() << "\n";
    return rc;
  } catch (const adamsep::ConfigViolations& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return adamsep::kExitConfig;
  } catch (const adamsep::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return adamsep::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return adamsep::kExitConfig;
  }
}
