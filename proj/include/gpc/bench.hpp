#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpc/kernels.hpp"
#include "gpc/matrix.hpp"
#include "gpc/models.hpp"

namespace gpc::bench {

enum class Generator { UniformSynthetic, TrendSeasonal, BumpNoise, CsvFile };

std::string_view to_string(Generator g) noexcept;
/// "uniform-synthetic", "trend-seasonal", "bump-noise", "csv-file".
Generator parse_generator(std::string_view text);

struct DatasetSpec {
  Generator generator = Generator::UniformSynthetic;
  /// Training points; the generators add one test point per four training points.
  std::size_t n = 500;
  /// Ignored by the 1-D generators.
  std::size_t d = 1;
  /// Noise standard deviation.
  double noise = 0.1;
  std::uint64_t seed = 0;
  /// csv-file only.
  std::string path;
  /// uniform-synthetic only: the covariance y is drawn from.
  std::string kernel = "(rbf 0.3)";

  void validate() const;
};

struct Dataset {
  Matrix x;
  Vector y;
  Matrix x_test;
  Vector y_test;
};

/// Every fifth row (index 4, 9, ...) goes to the test split.
Dataset split_interleaved(const Matrix& x, std::span<const double> y);

Dataset generate_dataset(const DatasetSpec& spec);

/// One draw of f ~ GP(0, k) at x plus iid N(0, noise_sd²), using `seed`.
/// Exact Cholesky sampling up to `exact_limit` rows; beyond that f is sampled
/// on the first exact_limit rows and extended by the conditional mean.
Vector sample_gp(const Matrix& x, const KernelExpr& k, double noise_sd, std::uint64_t seed,
                 std::size_t exact_limit = 3000);

/// D feature columns then one target column; a non-numeric first row is a header.
std::pair<Matrix, Vector> read_csv(const std::string& path);
void write_csv(const std::string& path, const Matrix& x, std::span<const double> y);

struct BenchRecord {
  std::string suite;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t grid = 0;
  std::string strategy;
  std::string kernel;
  std::uint64_t seed = 0;
  /// Retained runs only.
  std::vector<double> times_ms;
  double median_ms = 0.0;
  std::int64_t peak_bytes = 0;
  /// Accuracy suite only.
  std::optional<Metrics> accuracy;
  /// "ok" or the failure message.
  std::string status = "ok";

  bool ok() const noexcept { return status == "ok"; }
};

struct SuiteConfig {
  std::string suite = "exact";
  std::vector<std::size_t> ns{256};
  std::vector<std::size_t> ds{1};
  std::size_t m = 64;
  /// SKI grid size; 0 picks the library default.
  std::size_t grid = 0;
  std::string kernel = "(rbf 0.3)";
  std::size_t runs = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  double noise_variance = 0.01;
  Strategy strategy = Strategy::Auto;
  /// Adam steps for the sparse and accuracy suites.
  std::size_t steps = 0;
  /// When set, exact/sparse/accuracy cells read this file instead of generating data.
  std::string data_path;

  void validate() const;
};

/// exact, sparse, ski, matvec, cholesky, gram, memory, accuracy.
const std::vector<std::string>& suite_names();

double median(std::vector<double> values);

/// Cells in the order ns × ds (n outer). A cell that throws is recorded with
/// its message in `status` and the suite moves on.
std::vector<BenchRecord> run_suite(const SuiteConfig& cfg);

struct AccuracyCell {
  Metrics metrics;
  KernelExpr kernel;
  double noise_variance = 0.0;
};

/// Hyperparameters start at (scale var(y) base) with noise 0.01·var(y) and are
/// tuned by Adam on the exact log marginal likelihood, then scored on the test split.
AccuracyCell accuracy_exact(const Dataset& data, const KernelExpr& base, const OptimizerConfig& opt);
/// Same starting point, tuned on the VFE bound with M inducing points.
AccuracyCell accuracy_sparse(const Dataset& data, const KernelExpr& base, std::size_t m, const OptimizerConfig& opt);

enum class TableFormat { Csv, Markdown };
TableFormat parse_format(std::string_view text);

std::string emit_table(const std::vector<BenchRecord>& records, TableFormat format);

}  // namespace gpc::bench
