#include "flatfiber/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Finite-element solver for -Laplace(u) - f(x, u) = g on [0,1]x[0,2] via fiber tracing"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  bool quiet = false;
  const char* commands[][2] = {
      {"mesh", "write the vertex, DOF and triangle tables"},
      {"eigs", "write discrete and analytic Dirichlet eigenvalues"},
      {"fiber-point", "horizontal Newton from start.u0; residual table and fiber point"},
      {"trace-fiber", "sample the image heights along a line, circle or rays of a fiber"},
      {"solve", "find the solutions on a fiber (1-D bracketing or 2-D probing)"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_flag("--quiet", quiet, "suppress progress messages");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : flatfiber::exit_config;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<std::filesystem::path> out_dir;
  if (!out.empty()) out_dir = out;
  return flatfiber::run_command(command, config, out_dir, quiet);
}
