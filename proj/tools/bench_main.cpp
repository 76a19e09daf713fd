#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gpc/bench.hpp"
#include "gpc/error.hpp"
#include "gpc/parallel.hpp"
#include "gpc/simd.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCellFailed = 1;
constexpr int kExitBadArgs = 2;

bool apply_thread_cap() {
  const char* env = std::getenv("BENCH_THREADS");
  if (!env || !*env) return true;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return false;
  gpc::set_max_threads(static_cast<unsigned>(v));
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  gpc::bench::SuiteConfig cfg;
  std::string format = "csv";
  std::string out_path;
  std::string strategy = "auto";

  CLI::App app{"Timing and accuracy suites for the GP library"};
  app.option_defaults()->always_capture_default();
  app.add_option("--suite", cfg.suite, "exact, sparse, ski, matvec, cholesky, gram, memory, accuracy")
      ->check(CLI::IsMember(gpc::bench::suite_names()));
  app.add_option("--n", cfg.ns, "Training sizes, comma separated")->delimiter(',');
  app.add_option("--d", cfg.ds, "Input dimensions, comma separated")->delimiter(',');
  app.add_option("--m", cfg.m, "Inducing points (sparse, accuracy)");
  app.add_option("--grid", cfg.grid, "SKI grid size, 0 for the default");
  app.add_option("--kernel", cfg.kernel, "Kernel s-expression");
  app.add_option("--runs", cfg.runs, "Timed runs per cell")->check(CLI::PositiveNumber);
  app.add_option("--warmup", cfg.warmup, "Discarded runs per cell");
  app.add_option("--seed", cfg.seed, "Data seed");
  app.add_option("--noise", cfg.noise_variance, "Noise variance")->check(CLI::PositiveNumber);
  app.add_option("--strategy", strategy, "Exact solver for the exact suite")
      ->check(CLI::IsMember({"auto", "cholesky", "cg", "ski"}));
  app.add_option("--steps", cfg.steps, "Adam steps (sparse, accuracy)");
  app.add_option("--data", cfg.data_path, "CSV dataset for exact, sparse and accuracy cells")
      ->check(CLI::ExistingFile);
  app.add_option("--format", format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
  app.add_option("--out", out_path, "Output file (stdout when empty)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadArgs;
  }

  if (!apply_thread_cap()) {
    std::cerr << "BENCH_THREADS must be a positive integer\n";
    return kExitBadArgs;
  }

  std::vector<gpc::bench::BenchRecord> records;
  try {
    cfg.strategy = gpc::parse_strategy(strategy);
    cfg.validate();
    records = gpc::bench::run_suite(cfg);
  } catch (const gpc::Error& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return kExitBadArgs;
  }

  const std::string table = gpc::bench::emit_table(records, gpc::bench::parse_format(format));
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << table;
    if (!out) {
      std::cerr << "bench: cannot write " << out_path << '\n';
      return kExitCellFailed;
    }
  }
  std::cerr << "simd backend: " << gpc::simd::to_string(gpc::simd::active_backend()) << '\n';

  bool all_ok = true;
  for (const auto& r : records) all_ok = all_ok && r.ok();
  return all_ok ? kExitOk : kExitCellFailed;
}
