#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stablebel/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stablebel: BEL gradient estimators for SDEs driven by subordinated Brownian motion"};
  app.require_subcommand(1);

  stablebel::CliOptions opts;
  std::uint64_t seed = 0;
  for (const auto& name : stablebel::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opts.out_dir, "output directory");
  }

  std::string artifact_a;
  std::string artifact_b;
  double threshold = 3.0;
  auto* compare = app.add_subcommand("compare", "z-score comparison of two artifacts with value/std_err columns");
  compare->add_option("artifact_a", artifact_a)->required()->check(CLI::ExistingFile);
  compare->add_option("artifact_b", artifact_b)->required()->check(CLI::ExistingFile);
  compare->add_option("--threshold", threshold, "largest allowed |z|");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (compare->parsed()) {
    try {
      return stablebel::compare_artifacts(artifact_a, artifact_b, threshold, std::cout);
    } catch (const stablebel::InvalidArgument& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  for (auto* sub : app.get_subcommands()) {
    opts.subcommand = sub->get_name();
    if (sub->count("--seed") > 0) opts.seed = seed;
  }
  return stablebel::run(opts, std::cerr);
}
