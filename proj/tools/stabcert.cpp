// Command-line front end: simulate, check, lyapunov, gains, catalog.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stabcert/catalog.hpp"
#include "stabcert/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks of stability in three measures"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;

  for (const char* name : {"simulate", "check", "lyapunov", "gains"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "overrides the configured seed");
  }
  app.add_subcommand("catalog", "list the built-in systems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stabcert::runner::exit_input_error;
  }

  const auto* sub = app.get_subcommands().front();
  if (sub->get_name() == "catalog") {
    std::cout << stabcert::catalog::describe_catalog();
    return 0;
  }
  const auto result = stabcert::runner::run_file(config_path, sub->get_name(), out_dir, seed);
  (result.exit_code == stabcert::runner::exit_input_error ? std::cerr : std::cout) << result.summary << "\n";
  return result.exit_code;
}
