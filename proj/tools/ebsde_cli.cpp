// ebsde command-line front end.
//
//   ebsde <command> [--preset NAME] [--config FILE] [--set key=value]...
//         [--seed N] [--threads N] [--out DIR] [--checkpoint FILE] [--dry-run]
//
// Settings are applied in order: schema defaults, preset, config file, --set,
// --seed. EBSDE_OUTPUT_DIR overrides output.dir; --out overrides both.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ebsde/commands.hpp"
#include "ebsde/config.hpp"
#include "ebsde/parallel.hpp"

namespace {

int exit_code(ebsde::ErrorCode c) {
  switch (c) {
    case ebsde::ErrorCode::ConfigError:
    case ebsde::ErrorCode::InvalidArgument:
    case ebsde::ErrorCode::InvalidCombination: return 2;
    case ebsde::ErrorCode::IoError: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ergodic BSDE laboratory"};
  app.require_subcommand(1);

  std::string preset, config_file, out_dir, checkpoint;
  std::vector<std::string> sets;
  long long seed = -1;
  std::size_t threads = 0;
  bool dry_run = false, print_config = false, quiet = false;

  for (const auto& name : ebsde::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--preset", preset, "named parameter set")
        ->check(CLI::IsMember([] {
          std::vector<std::string> v;
          for (const auto& [k, _] : ebsde::preset_texts()) v.push_back(k);
          return v;
        }()));
    sub->add_option("--config", config_file, "key = value file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override, key=value");
    sub->add_option("--seed", seed, "overrides train.seed");
    sub->add_option("--threads", threads, "worker threads (0 = hardware)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--checkpoint", checkpoint, "checkpoint file for train/evaluate/utility");
    sub->add_flag("--dry-run", dry_run, "validate the configuration and exit");
    sub->add_flag("--print-config", print_config, "print the resolved configuration");
    sub->add_flag("-q,--quiet", quiet, "no progress output");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    ebsde::Config cfg = preset.empty() ? ebsde::Config{} : ebsde::preset_config(preset);
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ebsde::Error(ebsde::ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
      cfg.set(ebsde::detail::trim(s.substr(0, eq)), s.substr(eq + 1));
    }
    if (seed >= 0) cfg.set("train.seed", std::to_string(seed));

    ebsde::RunContext ctx;
    ctx.out_dir = cfg.text("output.dir");
    if (const char* env = std::getenv("EBSDE_OUTPUT_DIR"); env && *env) ctx.out_dir = env;
    if (!out_dir.empty()) ctx.out_dir = out_dir;
    ctx.threads = threads ? threads : ebsde::default_threads();
    ctx.dry_run = dry_run;
    if (!checkpoint.empty()) ctx.checkpoint = checkpoint;
    if (quiet) ctx.log = nullptr;

    if (print_config || dry_run) std::cout << cfg.dump();
    const int rc = ebsde::run_command(command, cfg, ctx);
    if (dry_run) std::cout << "# ok " << cfg.provenance() << "\n";
    return rc;
  } catch (const ebsde::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
