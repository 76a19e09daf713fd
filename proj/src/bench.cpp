#include "gpc/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "gpc/ledger.hpp"
#include "gpc/linalg.hpp"
#include "gpc/solvers.hpp"

namespace gpc::bench {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

std::size_t total_points(std::size_t n_train) { return n_train + (n_train - 1) / 4; }

Matrix uniform_inputs(std::size_t n, std::size_t d, std::uint64_t seed) {
  auto rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(n, d);
  for (double& v : x.values()) v = u(rng);
  return x;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto r = std::from_chars(first, s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

double sample_variance(std::span<const double> y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(std::max<std::size_t>(1, y.size() - 1));
}

}  // namespace

std::string_view to_string(Generator g) noexcept {
  switch (g) {
    case Generator::UniformSynthetic: return "uniform-synthetic";
    case Generator::TrendSeasonal: return "trend-seasonal";
    case Generator::BumpNoise: return "bump-noise";
    case Generator::CsvFile: return "csv-file";
  }
  return "?";
}

Generator parse_generator(std::string_view text) {
  for (Generator g : {Generator::UniformSynthetic, Generator::TrendSeasonal, Generator::BumpNoise, Generator::CsvFile})
    if (text == to_string(g)) return g;
  fail(ErrorKind::InvalidArgument, "unknown generator '" + std::string(text) + "'");
}

void DatasetSpec::validate() const {
  if (generator == Generator::CsvFile) {
    require(!path.empty(), ErrorKind::InvalidArgument, "dataset: csv-file needs a path");
    return;
  }
  require(n >= 2, ErrorKind::InvalidArgument, "dataset: need N >= 2");
  require(d >= 1, ErrorKind::InvalidArgument, "dataset: need D >= 1");
  require(std::isfinite(noise) && noise >= 0.0, ErrorKind::InvalidArgument, "dataset: noise must be >= 0");
}

Dataset split_interleaved(const Matrix& x, std::span<const double> y) {
  require(x.rows() == y.size(), ErrorKind::DimensionMismatch, "split: y length must equal X rows");
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < x.rows(); ++i) (i % 5 == 4 ? test : train).push_back(i);
  Dataset out;
  out.x = x.select_rows(train);
  out.x_test = x.select_rows(test);
  for (std::size_t i : train) out.y.push_back(y[i]);
  for (std::size_t i : test) out.y_test.push_back(y[i]);
  return out;
}

Vector sample_gp(const Matrix& x, const KernelExpr& k, double noise_sd, std::uint64_t seed, std::size_t exact_limit) {
  require(exact_limit >= 1, ErrorKind::InvalidArgument, "sample_gp: exact_limit must be positive");
  const std::size_t n = x.rows();
  const std::size_t na = std::min(n, exact_limit);
  auto rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Matrix anchors = x.row_range(0, na);
  Matrix kaa = kernel_eval(k, anchors, anchors);
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < na; ++i) mean_diag += kaa(i, i);
  mean_diag /= static_cast<double>(na);
  for (std::size_t i = 0; i < na; ++i) kaa(i, i) += 1e-8 * mean_diag;
  const CholeskyFactor l = cholesky(kaa);

  Vector z(na);
  for (double& v : z) v = normal(rng);
  Vector f(n, 0.0);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j <= i; ++j) f[i] += l.lower(i, j) * z[j];

  if (na < n) {
    const Vector w = cholesky_solve(l, std::span<const double>(f.data(), na));
    constexpr std::size_t kChunk = 1024;
    for (std::size_t b0 = na; b0 < n; b0 += kChunk) {
      const std::size_t b1 = std::min(n, b0 + kChunk);
      const Vector fb = matvec(kernel_eval(k, x.row_range(b0, b1), anchors), w);
      std::copy(fb.begin(), fb.end(), f.begin() + static_cast<std::ptrdiff_t>(b0));
    }
  }
  for (double& v : f) v += noise_sd * normal(rng);
  return f;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.generator == Generator::CsvFile) {
    const auto [x, y] = read_csv(spec.path);
    return split_interleaved(x, y);
  }
  const std::size_t total = total_points(spec.n);
  auto rng = make_rng(spec.seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);

  switch (spec.generator) {
    case Generator::UniformSynthetic: {
      const Matrix x = uniform_inputs(total, spec.d, spec.seed);
      const Vector y = sample_gp(x, KernelExpr::parse(spec.kernel), spec.noise, spec.seed);
      return split_interleaved(x, y);
    }
    case Generator::TrendSeasonal: {
      // Monthly samples in years, centered on the middle of the record.
      Matrix x(total, 1);
      Vector y(total);
      const double mid = static_cast<double>(total - 1) / 24.0;
      for (std::size_t i = 0; i < total; ++i) {
        const double t = static_cast<double>(i) / 12.0 - mid;
        x(i, 0) = t;
        y[i] = 0.5 * t + 2.0 * std::sin(2.0 * std::numbers::pi * t) + spec.noise * normal(rng);
      }
      return split_interleaved(x, y);
    }
    case Generator::BumpNoise: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> ts(total);
      for (double& t : ts) t = u(rng);
      std::sort(ts.begin(), ts.end());
      Matrix x(total, 1);
      Vector y(total);
      for (std::size_t i = 0; i < total; ++i) {
        const double t = ts[i];
        const double s = t - 0.2;
        const double envelope = s > 0.0 ? std::exp(-s / 0.25) : 0.0;
        const double f = -1.5 * envelope * std::sin(2.0 * std::numbers::pi * s / 0.35);
        x(i, 0) = t;
        y[i] = f + spec.noise * (0.2 + 3.0 * envelope) * normal(rng);
      }
      return split_interleaved(x, y);
    }
    case Generator::CsvFile:
      break;
  }
  fail(ErrorKind::InvalidArgument, "dataset: unhandled generator");
}

std::pair<Matrix, Vector> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "csv: cannot open '" + path + "'");
  std::vector<double> features;
  Vector y;
  std::size_t cols = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size() && numeric; ++j) numeric = parse_number(fields[j], row[j]);
    if (!numeric) {
      if (cols == 0 && y.empty()) continue;  // header
      fail(ErrorKind::Parse, "csv: non-numeric field on line " + std::to_string(line_no) + " of '" + path + "'");
    }
    if (fields.size() < 2) fail(ErrorKind::Parse, "csv: need at least one feature and a target on line " +
                                                      std::to_string(line_no));
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols)
      fail(ErrorKind::Parse, "csv: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                 " fields, expected " + std::to_string(cols));
    features.insert(features.end(), row.begin(), row.end() - 1);
    y.push_back(row.back());
  }
  if (y.empty()) fail(ErrorKind::Parse, "csv: no data rows in '" + path + "'");
  return {Matrix::from_values(y.size(), cols - 1, features), std::move(y)};
}

void write_csv(const std::string& path, const Matrix& x, std::span<const double> y) {
  require(x.rows() == y.size(), ErrorKind::DimensionMismatch, "csv: y length must equal X rows");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "csv: cannot write '" + path + "'");
  for (std::size_t j = 0; j < x.cols(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out << format_double(x(i, j)) << ',';
    out << format_double(y[i]) << '\n';
  }
  if (!out) fail(ErrorKind::Io, "csv: write to '" + path + "' failed");
}

AccuracyCell accuracy_exact(const Dataset& data, const KernelExpr& base, const OptimizerConfig& opt) {
  const double var = sample_variance(data.y);
  const KernelExpr k0 = KernelExpr::scale(var, base);
  const ExactFitResult fit = optimize_exact(data.x, data.y, k0, 0.01 * var, opt);
  const ExactState s = gp_fit(data.x, data.y, fit.kernel, fit.noise_variance, Strategy::Cholesky);
  const Prediction p = gp_predict(s, data.x_test);
  return {metrics(p.mean, p.variance, fit.noise_variance, data.y_test), fit.kernel, fit.noise_variance};
}

AccuracyCell accuracy_sparse(const Dataset& data, const KernelExpr& base, std::size_t m, const OptimizerConfig& opt) {
  const double var = sample_variance(data.y);
  const KernelExpr k0 = KernelExpr::scale(var, base);
  const SparseState s = sparse_fit(data.x, data.y, k0, 0.01 * var, m, opt);
  const Prediction p = sparse_predict(s, data.x_test);
  return {metrics(p.mean, p.variance, s.noise_variance(), data.y_test), s.kernel(), s.noise_variance()};
}

void SuiteConfig::validate() const {
  const auto& names = suite_names();
  require(std::find(names.begin(), names.end(), suite) != names.end(), ErrorKind::InvalidArgument,
          "bench: unknown suite");
  require(!ns.empty() && !ds.empty(), ErrorKind::InvalidArgument, "bench: empty N or D list");
  for (std::size_t n : ns) require(n >= 2, ErrorKind::InvalidArgument, "bench: every N must be >= 2");
  for (std::size_t d : ds) require(d >= 1, ErrorKind::InvalidArgument, "bench: every D must be >= 1");
  require(runs >= 1, ErrorKind::InvalidArgument, "bench: runs must be >= 1");
  require(std::isfinite(noise_variance) && noise_variance > 0.0, ErrorKind::InvalidArgument,
          "bench: noise variance must be positive");
  KernelExpr::parse(kernel);
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"exact", "sparse", "ski",    "matvec",
                                              "cholesky", "gram", "memory", "accuracy"};
  return names;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorKind::InvalidArgument, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  return values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

namespace {

// Runs body warmup + runs times; keeps timings and peak bytes of the retained runs.
template <class Body>
void time_cell(const SuiteConfig& cfg, BenchRecord& rec, Body&& body) {
  using clock = std::chrono::steady_clock;
  rec.times_ms.clear();
  rec.peak_bytes = 0;
  for (std::size_t r = 0; r < cfg.warmup + cfg.runs; ++r) {
    const PeakScope scope;
    const auto t0 = clock::now();
    body();
    const auto t1 = clock::now();
    if (r < cfg.warmup) continue;
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count();
    // Sub-microsecond regions still report a positive time.
    rec.times_ms.push_back(std::max<double>(static_cast<double>(us), 0.5) / 1000.0);
    rec.peak_bytes = std::max(rec.peak_bytes, scope.extra_peak());
  }
  rec.median_ms = median(rec.times_ms);
}

Dataset cell_dataset(const SuiteConfig& cfg, std::size_t n, std::size_t d, Generator g) {
  DatasetSpec spec;
  spec.n = n;
  spec.d = d;
  spec.seed = cfg.seed;
  spec.noise = std::sqrt(cfg.noise_variance);
  spec.kernel = cfg.kernel;
  spec.generator = g;
  if (!cfg.data_path.empty()) {
    spec.generator = Generator::CsvFile;
    spec.path = cfg.data_path;
  }
  return generate_dataset(spec);
}

volatile double g_sink = 0.0;

void volatile_sink(double v) { g_sink = g_sink + v; }

void run_cell(const SuiteConfig& cfg, const KernelExpr& k, BenchRecord& rec, std::vector<BenchRecord>& out) {
  const std::string& suite = cfg.suite;
  const std::size_t n = rec.n;
  const std::size_t d = rec.d;

  if (suite == "gram") {
    const Matrix x = uniform_inputs(n, d, cfg.seed);
    time_cell(cfg, rec, [&] { volatile_sink(kernel_eval(k, x, x)(0, 0)); });
  } else if (suite == "cholesky") {
    Matrix g = kernel_eval(k, uniform_inputs(n, d, cfg.seed), uniform_inputs(n, d, cfg.seed));
    for (std::size_t i = 0; i < n; ++i) g(i, i) += cfg.noise_variance;
    time_cell(cfg, rec, [&] { volatile_sink(cholesky(g).lower(n - 1, n - 1)); });
  } else if (suite == "matvec") {
    const Matrix x = uniform_inputs(n, d, cfg.seed);
    const Vector v = rademacher(n, cfg.seed, 0);
    const std::size_t block = FitOptions{}.matvec_block;
    time_cell(cfg, rec, [&] { volatile_sink(matrix_free_matvec(k, x, cfg.noise_variance, v, block)[0]); });
  } else if (suite == "ski") {
    require(d == 1, ErrorKind::Unsupported, "ski suite requires D = 1");
    const Matrix x = uniform_inputs(n, 1, cfg.seed);
    rec.grid = cfg.grid ? cfg.grid : default_ski_grid_size(n);
    const SkiState ski = build_ski(x, k, rec.grid);
    const Vector v = rademacher(n, cfg.seed, 0);
    time_cell(cfg, rec, [&] { volatile_sink(ski_matvec(ski, cfg.noise_variance, v)[0]); });
  } else if (suite == "exact") {
    const Dataset data = cell_dataset(cfg, n, d, Generator::UniformSynthetic);
    rec.n = data.x.rows();
    rec.d = data.x.cols();
    const Strategy s = resolve_strategy(cfg.strategy, rec.n, rec.d);
    rec.strategy = std::string(to_string(s));
    FitOptions opts;
    opts.ski_grid_size = cfg.grid;
    time_cell(cfg, rec, [&] {
      const ExactState st = gp_fit(data.x, data.y, k, cfg.noise_variance, s, opts);
      volatile_sink(gp_predict(st, data.x_test).mean[0]);
    });
  } else if (suite == "sparse") {
    const Dataset data = cell_dataset(cfg, n, d, Generator::UniformSynthetic);
    rec.n = data.x.rows();
    rec.d = data.x.cols();
    rec.m = std::min(cfg.m, rec.n);
    OptimizerConfig opt;
    opt.steps = cfg.steps;
    time_cell(cfg, rec, [&] {
      const SparseState st = sparse_fit(data.x, data.y, k, cfg.noise_variance, rec.m, opt);
      volatile_sink(sparse_predict(st, data.x_test).mean[0]);
    });
  } else if (suite == "memory") {
    const Dataset data = cell_dataset(cfg, n, d, Generator::UniformSynthetic);
    rec.n = data.x.rows();
    rec.d = data.x.cols();
    for (Strategy s : {Strategy::Cholesky, Strategy::CG}) {
      BenchRecord r = rec;
      r.strategy = std::string(to_string(s));
      try {
        time_cell(cfg, r, [&] { volatile_sink(gp_fit(data.x, data.y, k, cfg.noise_variance, s).alpha()[0]); });
      } catch (const std::exception& e) {
        r.status = e.what();
      }
      out.push_back(std::move(r));
    }
    return;
  } else if (suite == "accuracy") {
    const Dataset data = cell_dataset(cfg, n, 1, Generator::TrendSeasonal);
    rec.n = data.x.rows();
    rec.d = data.x.cols();
    OptimizerConfig opt;
    opt.steps = cfg.steps;
    BenchRecord exact = rec;
    exact.strategy = "exact";
    BenchRecord sparse = rec;
    sparse.strategy = "sparse";
    sparse.m = std::min(cfg.m, rec.n);
    try {
      time_cell(cfg, exact, [&] { exact.accuracy = accuracy_exact(data, k, opt).metrics; });
    } catch (const std::exception& e) {
      exact.status = e.what();
    }
    try {
      time_cell(cfg, sparse, [&] { sparse.accuracy = accuracy_sparse(data, k, sparse.m, opt).metrics; });
    } catch (const std::exception& e) {
      sparse.status = e.what();
    }
    out.push_back(std::move(exact));
    out.push_back(std::move(sparse));
    return;
  }
  out.push_back(rec);
}

}  // namespace

std::vector<BenchRecord> run_suite(const SuiteConfig& cfg) {
  cfg.validate();
  const KernelExpr k = KernelExpr::parse(cfg.kernel);
  std::vector<BenchRecord> out;
  for (std::size_t n : cfg.ns) {
    for (std::size_t d : cfg.ds) {
      BenchRecord rec;
      rec.suite = cfg.suite;
      rec.n = n;
      rec.d = d;
      rec.kernel = k.to_string();
      rec.seed = cfg.seed;
      try {
        run_cell(cfg, k, rec, out);
      } catch (const std::exception& e) {
        rec.status = e.what();
        rec.times_ms.clear();
        rec.median_ms = 0.0;
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

TableFormat parse_format(std::string_view text) {
  if (text == "csv") return TableFormat::Csv;
  if (text == "markdown" || text == "md") return TableFormat::Markdown;
  fail(ErrorKind::InvalidArgument, "unknown table format '" + std::string(text) + "'");
}

namespace {

const std::vector<std::string> kColumns{"suite", "n",         "d",          "m",    "grid", "strategy",
                                        "kernel", "seed",     "runs",       "median_ms", "peak_bytes",
                                        "rmse",   "nll",      "coverage95", "status"};

std::vector<std::string> cells(const BenchRecord& r, TableFormat f) {
  const auto num = [&](double v) { return f == TableFormat::Csv ? format_double(v) : format_fixed(v, 3); };
  const auto opt_size = [](std::size_t v) { return v ? std::to_string(v) : std::string(); };
  std::vector<std::string> c{r.suite,
                             std::to_string(r.n),
                             std::to_string(r.d),
                             opt_size(r.m),
                             opt_size(r.grid),
                             r.strategy,
                             r.kernel,
                             std::to_string(r.seed),
                             std::to_string(r.times_ms.size()),
                             num(r.median_ms),
                             std::to_string(r.peak_bytes)};
  if (r.accuracy) {
    c.push_back(f == TableFormat::Csv ? format_double(r.accuracy->rmse) : format_fixed(r.accuracy->rmse, 4));
    c.push_back(f == TableFormat::Csv ? format_double(r.accuracy->nll) : format_fixed(r.accuracy->nll, 4));
    c.push_back(f == TableFormat::Csv ? format_double(r.accuracy->coverage95)
                                      : format_fixed(100.0 * r.accuracy->coverage95, 1) + "%");
  } else {
    c.insert(c.end(), 3, std::string());
  }
  c.push_back(r.status);
  return c;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

std::string md_field(std::string s) {
  std::string out;
  for (char ch : s) {
    if (ch == '|') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

}  // namespace

std::string emit_table(const std::vector<BenchRecord>& records, TableFormat format) {
  require(!records.empty(), ErrorKind::InvalidArgument, "emit_table: no records");
  std::ostringstream os;
  if (format == TableFormat::Csv) {
    for (std::size_t j = 0; j < kColumns.size(); ++j) os << (j ? "," : "") << kColumns[j];
    os << "\r\n";
    for (const auto& r : records) {
      const auto c = cells(r, format);
      for (std::size_t j = 0; j < c.size(); ++j) os << (j ? "," : "") << csv_field(c[j]);
      os << "\r\n";
    }
    return os.str();
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back(kColumns);
  for (const auto& r : records) {
    auto c = cells(r, format);
    for (auto& s : c) s = md_field(std::move(s));
    rows.push_back(std::move(c));
  }
  std::vector<std::size_t> width(kColumns.size(), 3);
  for (const auto& row : rows)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  const auto emit_row = [&](const std::vector<std::string>& row) {
    os << '|';
    for (std::size_t j = 0; j < row.size(); ++j) os << ' ' << row[j] << std::string(width[j] - row[j].size(), ' ') << " |";
    os << '\n';
  };
  emit_row(rows[0]);
  os << '|';
  for (std::size_t w : width) os << std::string(w + 2, '-') << '|';
  os << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) emit_row(rows[i]);
  return os.str();
}

}  // namespace gpc::bench
