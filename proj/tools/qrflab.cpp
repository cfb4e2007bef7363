#include <CLI11.hpp>

#include <iostream>

#include "qrflab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qrflab: quantum reference frame scenarios"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out = "out";
  int threads = 0;
  bool strict = false;
  for (const auto& name : qrflab::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--scenario", scenario, "scenario JSON file")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker threads (QRFLAB_THREADS if unset)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--strict", strict, "treat warnings as failures");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto res = qrflab::run(command, scenario, out, {threads, strict});
  if (res.status == 2) {
    std::cerr << "error: " << res.message << '\n';
  } else {
    std::cout << res.report.dump(2) << '\n';
    if (res.status) std::cerr << res.message << '\n';
  }
  return res.status;
}
