// Experiment runner: JSON configuration in, plot-ready CSV series/tables
// and a JSON summary out. Everything below the file boundary is
// deterministic for a fixed configuration — seeded randomness, fixed
// summation and row orders, and shortest-round-trip decimal formatting.
// The only field exempt from byte determinism is the wall-time entry in
// the summary.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/fock.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/onebody.hpp"
#include "fermiwalk/ris.hpp"
#include "fermiwalk/shift_exact.hpp"
#include "fermiwalk/spectral.hpp"
#include "fermiwalk/twobody.hpp"
#include "fermiwalk/walks.hpp"
#include "fermiwalk/wedge.hpp"

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fermiwalk {

// ---------------------------------------------------------------------------
// Deterministic text formatting.

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

// Accumulates rows of preformatted cells and writes them with a header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size())
      throw std::invalid_argument("CsvTable: row width does not match header");
    rows_.push_back(std::move(cells));
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("CsvTable: cannot open " + path.string());
    for (std::size_t i = 0; i < header_.size(); ++i)
      out << (i ? "," : "") << header_[i];
    out << "\n";
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// JSON <-> complex/matrix helpers; complex numbers are [re, im] pairs and
// matrices nested arrays of them.
inline nlohmann::json complex_to_json(const cplx& z) {
  return nlohmann::json::array({z.real(), z.imag()});
}

inline cplx complex_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw std::invalid_argument("config: complex entries must be [re, im] pairs");
  return cplx(j[0].get<double>(), j[1].get<double>());
}

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("config: matrix must be a nonempty array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw std::invalid_argument("config: matrix rows must be nonempty arrays");
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw std::invalid_argument("config: matrix rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) m(Eigen::Index(r), Eigen::Index(c)) = complex_from_json(j[r][c]);
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration.

enum class RunMode { evolve1, evolve2, shift_exact, ris_stats, oracle_check, spectral, sweep };

inline std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::evolve1: return "evolve1";
    case RunMode::evolve2: return "evolve2";
    case RunMode::shift_exact: return "shift-exact";
    case RunMode::ris_stats: return "ris-stats";
    case RunMode::oracle_check: return "oracle-check";
    case RunMode::spectral: return "spectral";
    case RunMode::sweep: return "sweep";
  }
  throw std::invalid_argument("to_string: unknown mode");
}

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "evolve1") return RunMode::evolve1;
  if (s == "evolve2") return RunMode::evolve2;
  if (s == "shift-exact") return RunMode::shift_exact;
  if (s == "ris-stats") return RunMode::ris_stats;
  if (s == "oracle-check") return RunMode::oracle_check;
  if (s == "spectral") return RunMode::spectral;
  if (s == "sweep") return RunMode::sweep;
  throw std::invalid_argument("config: unknown mode \"" + s + "\"");
}

struct ReservoirSpec {
  bool uniform = true;
  double sigma = 0.5;
  std::vector<cplx> coeffs;  // banded case: sigma(0), sigma(1), ...

  ReservoirSymbol build() const {
    return uniform ? ReservoirSymbol::uniform(sigma) : ReservoirSymbol::banded(coeffs);
  }

  static ReservoirSpec from_json(const nlohmann::json& j) {
    ReservoirSpec spec;
    const std::string type = j.at("type").get<std::string>();
    if (type == "uniform") {
      spec.uniform = true;
      spec.sigma = j.at("sigma").get<double>();
    } else if (type == "band") {
      spec.uniform = false;
      for (const auto& entry : j.at("coeffs")) spec.coeffs.push_back(detail::complex_from_json(entry));
    } else {
      throw std::invalid_argument("config: unknown reservoir type \"" + type + "\"");
    }
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (uniform) {
      j["type"] = "uniform";
      j["sigma"] = sigma;
    } else {
      j["type"] = "band";
      nlohmann::json arr = nlohmann::json::array();
      for (const cplx& c : coeffs) arr.push_back(detail::complex_to_json(c));
      j["coeffs"] = std::move(arr);
    }
    return j;
  }
};

inline nlohmann::json coin_config_to_json(const CoinConfig& config) {
  nlohmann::json j;
  j["n"] = config.n;
  j["boundary"] = config.boundary == Boundary::periodic ? "periodic" : "dirichlet";
  nlohmann::json coins = nlohmann::json::array();
  for (const Mat& c : config.coins) {
    nlohmann::json entries = nlohmann::json::array();
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 2; ++col) entries.push_back(detail::complex_to_json(c(r, col)));
    coins.push_back(std::move(entries));
  }
  j["coins"] = std::move(coins);
  return j;
}

inline CoinConfig coin_config_from_json(const nlohmann::json& j) {
  CoinConfig config;
  config.n = j.at("n").get<int>();
  const std::string boundary = j.at("boundary").get<std::string>();
  if (boundary == "periodic")
    config.boundary = Boundary::periodic;
  else if (boundary == "dirichlet")
    config.boundary = Boundary::dirichlet;
  else
    throw std::invalid_argument("config: unknown boundary \"" + boundary + "\"");
  for (const auto& entry : j.at("coins")) {
    if (!entry.is_array() || entry.size() != 4)
      throw std::invalid_argument("config: each coin needs 4 complex entries, row-major");
    Mat c(2, 2);
    c(0, 0) = detail::complex_from_json(entry[0]);
    c(0, 1) = detail::complex_from_json(entry[1]);
    c(1, 0) = detail::complex_from_json(entry[2]);
    c(1, 1) = detail::complex_from_json(entry[3]);
    config.coins.push_back(std::move(c));
  }
  config.require_valid();
  return config;
}

struct WalkSpec {
  enum class Kind { shift, coined_periodic, coined_dirichlet, matrix, identity };

  Kind kind = Kind::shift;
  int d = 2;                 // shift / identity
  int n = 2;                 // coined walks: cell count
  std::uint64_t coin_seed = 0;
  double margin = 0.05;
  std::optional<std::vector<Mat>> coins;  // explicit coins override the seed
  Mat entries;               // matrix kind

  int sample_dim() const {
    switch (kind) {
      case Kind::shift:
      case Kind::identity: return d;
      case Kind::coined_periodic: return 2 * n;
      case Kind::coined_dirichlet: return 2 * (n - 1);
      case Kind::matrix: return int(entries.rows());
    }
    throw std::invalid_argument("WalkSpec: unknown kind");
  }

  struct Built {
    SampleUnitary unitary;
    std::optional<CoinConfig> coin_config;
  };

  Built build(std::optional<std::uint64_t> seed_override = std::nullopt) const {
    switch (kind) {
      case Kind::shift: return {shift_sample(d), std::nullopt};
      case Kind::identity: return {SampleUnitary::from_matrix(Mat::Identity(d, d)), std::nullopt};
      case Kind::matrix: return {SampleUnitary::from_matrix(entries), std::nullopt};
      case Kind::coined_periodic:
      case Kind::coined_dirichlet: {
        const Boundary boundary =
            kind == Kind::coined_periodic ? Boundary::periodic : Boundary::dirichlet;
        CoinConfig config;
        if (coins) {
          config.n = n;
          config.boundary = boundary;
          config.coins = *coins;
        } else {
          config = random_coins(n, seed_override.value_or(coin_seed), boundary, margin);
        }
        SampleUnitary w = boundary == Boundary::periodic ? build_periodic(config)
                                                         : build_dirichlet(config);
        return {std::move(w), std::move(config)};
      }
    }
    throw std::invalid_argument("WalkSpec: unknown kind");
  }

  static WalkSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    WalkSpec spec;
    const std::string type = j.at("type").get<std::string>();
    if (type == "shift" || type == "identity") {
      spec.kind = type == "shift" ? Kind::shift : Kind::identity;
      spec.d = j.at("d").get<int>();
      if (spec.d < 2) throw std::invalid_argument("config: walk needs d >= 2");
    } else if (type == "coined-periodic" || type == "coined-dirichlet") {
      spec.kind = type == "coined-periodic" ? Kind::coined_periodic : Kind::coined_dirichlet;
      spec.n = j.at("n").get<int>();
      if (j.contains("coin_seed")) spec.coin_seed = j.at("coin_seed").get<std::uint64_t>();
      if (j.contains("margin")) spec.margin = j.at("margin").get<double>();
      if (j.contains("coins")) {
        std::vector<Mat> coins;
        for (const auto& entry : j.at("coins")) {
          if (!entry.is_array() || entry.size() != 4)
            throw std::invalid_argument("config: each coin needs 4 complex entries, row-major");
          Mat c(2, 2);
          c(0, 0) = detail::complex_from_json(entry[0]);
          c(0, 1) = detail::complex_from_json(entry[1]);
          c(1, 0) = detail::complex_from_json(entry[2]);
          c(1, 1) = detail::complex_from_json(entry[3]);
          coins.push_back(std::move(c));
        }
        spec.coins = std::move(coins);
      }
    } else if (type == "matrix") {
      spec.kind = Kind::matrix;
      if (j.contains("entries")) {
        spec.entries = detail::matrix_from_json(j.at("entries"));
      } else if (j.contains("file")) {
        const std::filesystem::path path = base_dir / j.at("file").get<std::string>();
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("config: walk matrix file not found: " + path.string());
        nlohmann::json content = nlohmann::json::parse(in);
        spec.entries = detail::matrix_from_json(content.contains("entries") ? content.at("entries")
                                                                            : content);
      } else {
        throw std::invalid_argument("config: matrix walk needs \"entries\" or \"file\"");
      }
    } else {
      throw std::invalid_argument("config: unknown walk type \"" + type + "\"");
    }
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    switch (kind) {
      case Kind::shift:
      case Kind::identity:
        j["type"] = kind == Kind::shift ? "shift" : "identity";
        j["d"] = d;
        break;
      case Kind::coined_periodic:
      case Kind::coined_dirichlet:
        j["type"] = kind == Kind::coined_periodic ? "coined-periodic" : "coined-dirichlet";
        j["n"] = n;
        j["coin_seed"] = coin_seed;
        j["margin"] = margin;
        if (coins) {
          nlohmann::json arr = nlohmann::json::array();
          for (const Mat& c : *coins) {
            nlohmann::json entries = nlohmann::json::array();
            for (int r = 0; r < 2; ++r)
              for (int col = 0; col < 2; ++col)
                entries.push_back(detail::complex_to_json(c(r, col)));
            arr.push_back(std::move(entries));
          }
          j["coins"] = std::move(arr);
        }
        break;
      case Kind::matrix:
        j["type"] = "matrix";
        j["entries"] = detail::matrix_to_json(entries);
        break;
    }
    return j;
  }
};

struct InitialSpec {
  enum class Kind { vacuum, uniform_filling, matrix };

  Kind kind = Kind::vacuum;
  double value = 0.0;
  Mat entries;  // one-body matrix

  OneBodyDensity one_body(int d) const {
    switch (kind) {
      case Kind::vacuum: return OneBodyDensity::zero(d);
      case Kind::uniform_filling: return OneBodyDensity::scaled_identity(d, value);
      case Kind::matrix:
        if (entries.rows() != d)
          throw std::invalid_argument("config: initial matrix dimension does not match the walk");
        return OneBodyDensity::from_matrix(entries);
    }
    throw std::invalid_argument("InitialSpec: unknown kind");
  }

  // Full sample state with the same one-body data: the gauge-invariant
  // quasifree state, decomposed into an occupation-pattern mixture. This is
  // the unique even, determinant-correlated extension, so the oracle and
  // the reduced recursions start from consistent hierarchies.
  SampleState sample_state(int d) const {
    if (kind == Kind::vacuum) return SampleState::vacuum(d);
    const ReservoirEnsemble ens = ensemble_from_two_point(one_body(d).matrix());
    SampleState state;
    state.weights = ens.weights;
    state.states = ens.states;
    return state;
  }

  static InitialSpec from_json(const nlohmann::json& j) {
    InitialSpec spec;
    const std::string type = j.at("type").get<std::string>();
    if (type == "vacuum") {
      spec.kind = Kind::vacuum;
    } else if (type == "uniform-filling") {
      spec.kind = Kind::uniform_filling;
      spec.value = j.at("value").get<double>();
    } else if (type == "matrix") {
      spec.kind = Kind::matrix;
      spec.entries = detail::matrix_from_json(j.at("entries"));
    } else {
      throw std::invalid_argument("config: unknown initial type \"" + type + "\"");
    }
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    switch (kind) {
      case Kind::vacuum: j["type"] = "vacuum"; break;
      case Kind::uniform_filling:
        j["type"] = "uniform-filling";
        j["value"] = value;
        break;
      case Kind::matrix:
        j["type"] = "matrix";
        j["entries"] = detail::matrix_to_json(entries);
        break;
    }
    return j;
  }
};

struct SweepSpec {
  std::vector<double> alpha;
  std::vector<double> sigma;
  std::vector<std::uint64_t> seeds;

  static SweepSpec from_json(const nlohmann::json& j) {
    SweepSpec spec;
    for (const auto& a : j.at("alpha")) spec.alpha.push_back(a.get<double>());
    for (const auto& s : j.at("sigma")) spec.sigma.push_back(s.get<double>());
    if (j.contains("seeds"))
      for (const auto& s : j.at("seeds")) spec.seeds.push_back(s.get<std::uint64_t>());
    if (spec.seeds.empty()) spec.seeds.push_back(0);
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["alpha"] = alpha;
    j["sigma"] = sigma;
    j["seeds"] = seeds;
    return j;
  }
};

struct ExperimentConfig {
  RunMode mode = RunMode::evolve1;
  double alpha = 1.0;
  ReservoirSpec reservoir;
  WalkSpec walk;
  InitialSpec initial;
  long steps = 100;
  long record_every = 1;
  int oracle_reservoir_modes = -1;  // -1: smallest size covering the horizon
  double tolerance = 1e-10;
  std::optional<SweepSpec> sweep;

  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = ".") {
    ExperimentConfig config;
    config.mode = run_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("alpha")) {
      config.alpha = j.at("alpha").get<double>();
      if (!std::isfinite(config.alpha)) throw std::invalid_argument("config: alpha must be finite");
    } else if (config.mode != RunMode::sweep) {
      throw std::invalid_argument("config: alpha is required outside sweep mode");
    }
    if (j.contains("reservoir")) config.reservoir = ReservoirSpec::from_json(j.at("reservoir"));
    config.walk = WalkSpec::from_json(j.at("walk"), base_dir);
    if (j.contains("initial")) config.initial = InitialSpec::from_json(j.at("initial"));
    if (j.contains("steps")) config.steps = j.at("steps").get<long>();
    if (config.steps < 0) throw std::invalid_argument("config: steps must be >= 0");
    if (j.contains("record_every")) config.record_every = j.at("record_every").get<long>();
    if (config.record_every < 1) throw std::invalid_argument("config: record_every must be >= 1");
    if (j.contains("oracle") && j.at("oracle").contains("reservoir_modes"))
      config.oracle_reservoir_modes = j.at("oracle").at("reservoir_modes").get<int>();
    if (j.contains("tolerance")) {
      config.tolerance = j.at("tolerance").get<double>();
      if (!(config.tolerance > 0)) throw std::invalid_argument("config: tolerance must be positive");
    }
    if (config.mode == RunMode::sweep) {
      if (!j.contains("sweep"))
        throw std::invalid_argument("config: sweep mode needs a \"sweep\" grid block");
      config.sweep = SweepSpec::from_json(j.at("sweep"));
      if (config.sweep->alpha.empty() || config.sweep->sigma.empty())
        throw std::invalid_argument("config: sweep grids must be nonempty");
    }
    return config;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = to_string(mode);
    j["alpha"] = alpha;
    j["reservoir"] = reservoir.to_json();
    j["walk"] = walk.to_json();
    j["initial"] = initial.to_json();
    j["steps"] = steps;
    j["record_every"] = record_every;
    if (oracle_reservoir_modes > 0)
      j["oracle"] = nlohmann::json{{"reservoir_modes", oracle_reservoir_modes}};
    j["tolerance"] = tolerance;
    if (sweep) j["sweep"] = sweep->to_json();
    return j;
  }
};

// ---------------------------------------------------------------------------
// Results.

struct RunSummary {
  std::string mode;
  nlohmann::json config_echo;
  std::optional<double> final_distance_one;
  std::optional<double> final_distance_two;
  std::optional<double> fitted_decay_rate;
  std::optional<SpectralReport> spectral;
  std::optional<bool> cyclic;
  std::optional<bool> generic;
  std::optional<double> density;            // stationary occupation density
  std::map<std::string, double> oracle_residuals;
  std::optional<bool> oracle_pass;
  std::optional<long> table_rows;
  double wall_time_ms = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["config"] = config_echo;
    if (final_distance_one) j["final_distance_one"] = *final_distance_one;
    if (final_distance_two) j["final_distance_two"] = *final_distance_two;
    if (fitted_decay_rate) j["fitted_decay_rate"] = *fitted_decay_rate;
    if (spectral) {
      nlohmann::json s;
      s["spectral_radius"] = spectral->spectral_radius;
      s["gap_to_unit_circle"] = spectral->gap_to_unit_circle;
      s["condition_ok"] = spectral->condition_ok;
      nlohmann::json eigs = nlohmann::json::array();
      for (const cplx& ev : spectral->eigenvalues) eigs.push_back(detail::complex_to_json(ev));
      s["eigenvalues"] = std::move(eigs);
      j["spectral"] = std::move(s);
    }
    if (cyclic) j["cyclic"] = *cyclic;
    if (generic) j["generic"] = *generic;
    if (density) j["density"] = *density;
    if (!oracle_residuals.empty() || oracle_pass) {
      nlohmann::json o;
      o["residuals"] = oracle_residuals;
      if (oracle_pass) o["pass"] = *oracle_pass;
      j["oracle"] = std::move(o);
    }
    if (table_rows) j["table_rows"] = *table_rows;
    j["wall_time_ms"] = wall_time_ms;
    return j;
  }
};

// Least-squares exponential decay rate of a distance series: slope of
// ln(distance) against time over the later half of the points that are
// still above numerical floor. NaN when fewer than five usable points
// remain. For the one-body map the result estimates spectral_radius(M)^2.
inline double fit_decay_rate(const std::vector<long>& times, const std::vector<double>& distances) {
  if (times.size() != distances.size())
    throw std::invalid_argument("fit_decay_rate: length mismatch");
  std::vector<std::pair<double, double>> kept;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (distances[i] > 1e-12) kept.emplace_back(double(times[i]), std::log(distances[i]));
  const std::size_t start = kept.size() / 2;
  const std::size_t n = kept.size() - start;
  if (n < 5) return std::numeric_limits<double>::quiet_NaN();
  double mean_t = 0.0, mean_y = 0.0;
  for (std::size_t i = start; i < kept.size(); ++i) {
    mean_t += kept[i].first;
    mean_y += kept[i].second;
  }
  mean_t /= double(n);
  mean_y /= double(n);
  double cov = 0.0, var = 0.0;
  for (std::size_t i = start; i < kept.size(); ++i) {
    cov += (kept[i].first - mean_t) * (kept[i].second - mean_y);
    var += (kept[i].first - mean_t) * (kept[i].first - mean_t);
  }
  if (var == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(cov / var);
}

// ---------------------------------------------------------------------------
// Mode implementations.

namespace detail {

struct RunContext {
  const ExperimentConfig& config;
  std::filesystem::path out_dir;
  int jobs = 1;
  bool verbose = false;
};

inline void run_evolve1(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  const auto built = cfg.walk.build();
  const int d = built.unitary.d();
  const EffectiveMatrices eff =
      build_effective(built.unitary, CouplingParams::from_alpha(cfg.alpha), cfg.reservoir.build());
  const EvolutionTrace trace = evolve(cfg.initial.one_body(d), eff, cfg.steps, cfg.record_every);

  CsvTable series({"t", "occupation_site0", "distance_one"});
  for (std::size_t i = 0; i < trace.times.size(); ++i)
    series.add_row({std::to_string(trace.times[i]),
                    format_double(trace.snapshots[i].matrix()(0, 0).real()),
                    format_double(trace.distances_to_limit[i])});
  series.write(ctx.out_dir / "series.csv");

  summary.final_distance_one = trace.distances_to_limit.back();
  summary.fitted_decay_rate = fit_decay_rate(trace.times, trace.distances_to_limit);
  summary.spectral = spectral_report(eff.M);
  summary.cyclic = is_cyclic(built.unitary);
}

inline void run_evolve2(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  const auto built = cfg.walk.build();
  const int d = built.unitary.d();
  const EffectiveMatrices eff =
      build_effective(built.unitary, CouplingParams::from_alpha(cfg.alpha), cfg.reservoir.build());
  const OneBodyDensity rho1_0 = cfg.initial.one_body(d);
  const TwoBodyDensity rho2_0 =
      TwoBodyDensity::from_matrix(d, gamma_on_wedge(rho1_0.matrix(), 2));
  const PairEvolution pair = evolve_pair(rho1_0, rho2_0, eff, cfg.steps, cfg.record_every);

  CsvTable series({"t", "distance_one", "distance_two"});
  for (std::size_t i = 0; i < pair.one_body.times.size(); ++i)
    series.add_row({std::to_string(pair.one_body.times[i]),
                    format_double(pair.one_body.distances_to_limit[i]),
                    format_double(pair.two_body.distances_to_limit[i])});
  series.write(ctx.out_dir / "series.csv");

  summary.final_distance_one = pair.one_body.distances_to_limit.back();
  summary.final_distance_two = pair.two_body.distances_to_limit.back();
  summary.fitted_decay_rate = fit_decay_rate(pair.one_body.times, pair.one_body.distances_to_limit);
  summary.spectral = spectral_report(eff.M);
  summary.cyclic = is_cyclic(built.unitary);
}

inline void run_shift_exact(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  if (cfg.walk.kind != WalkSpec::Kind::shift)
    throw std::invalid_argument("shift-exact mode requires the shift walk");
  const int d = cfg.walk.d;
  const ReservoirSymbol symbol = cfg.reservoir.build();
  const OneBodyDensity rho1_0 = cfg.initial.one_body(d);
  const TwoBodyDensity rho2_0 =
      TwoBodyDensity::from_matrix(d, gamma_on_wedge(rho1_0.matrix(), 2));
  const Mat limit1 = one_body_limit(symbol, cfg.alpha, d).matrix();
  const Mat limit2 = gamma_on_wedge(limit1, 2);

  CsvTable series({"m", "t", "distance_one", "distance_two"});
  double final1 = 0.0, final2 = 0.0;
  for (long m = 0; m <= cfg.steps; ++m) {
    if (m % cfg.record_every != 0 && m != cfg.steps && m != 0) continue;
    const Mat rho1 = one_body_at(symbol, rho1_0, cfg.alpha, m).matrix();
    const Mat rho2 = two_body_at(symbol, rho1_0, rho2_0, cfg.alpha, m).matrix();
    final1 = op_norm(rho1 - limit1);
    final2 = op_norm(rho2 - limit2);
    series.add_row({std::to_string(m), std::to_string(m * d), format_double(final1),
                    format_double(final2)});
  }
  series.write(ctx.out_dir / "series.csv");

  const AsymptoticProfile profile = asymptotic_density_and_correlations(symbol, cfg.alpha, d);
  CsvTable table({"j", "k", "correlation"});
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      table.add_row({std::to_string(j), std::to_string(k),
                     format_double(profile.correlations(j, k))});
  table.write(ctx.out_dir / "table.csv");

  summary.final_distance_one = final1;
  summary.final_distance_two = final2;
  summary.density = profile.density;
}

inline void run_ris_stats(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  if (cfg.walk.kind != WalkSpec::Kind::shift)
    throw std::invalid_argument("ris-stats mode requires the shift walk");
  if (!cfg.reservoir.uniform)
    throw std::invalid_argument("ris-stats mode requires a uniform reservoir");
  if (cfg.initial.kind != InitialSpec::Kind::vacuum)
    throw std::invalid_argument("ris-stats mode requires the vacuum initial state");
  const int d = cfg.walk.d;
  const double sigma = cfg.reservoir.sigma;
  const std::vector<double> occ0(std::size_t(d), 0.0);

  CsvTable series({"t", "flux", "cumulative_flux", "sample_number"});
  for (long t = 0; t <= cfg.steps; ++t) {
    if (t % cfg.record_every != 0 && t != cfg.steps && t != 0) continue;
    const FluxRecord flux = flux_expectation(t, sigma, cfg.alpha, d, occ0);
    double n_s = 0.0;
    for (int j = 0; j < d; ++j) n_s += number_expectation(j, t, sigma, cfg.alpha, d, occ0);
    series.add_row({std::to_string(t), format_double(flux.expectation),
                    format_double(flux.cumulative), format_double(n_s)});
  }
  series.write(ctx.out_dir / "series.csv");

  const long m_final = cfg.steps / d;
  const NumberDistribution dist = number_distribution(m_final, sigma, cfg.alpha, d);
  CsvTable table({"particles", "probability"});
  for (int p = 0; p <= d; ++p)
    table.add_row({std::to_string(p), format_double(dist.pmf[std::size_t(p)])});
  table.write(ctx.out_dir / "table.csv");

  summary.density = sigma;
}

inline void run_spectral(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  const auto built = cfg.walk.build();
  const SpectralReport report = thermalization_certificate(built.unitary, cfg.alpha);

  CsvTable table({"index", "real", "imag", "modulus"});
  for (std::size_t i = 0; i < report.eigenvalues.size(); ++i)
    table.add_row({std::to_string(i), format_double(report.eigenvalues[i].real()),
                   format_double(report.eigenvalues[i].imag()),
                   format_double(std::abs(report.eigenvalues[i]))});
  table.write(ctx.out_dir / "table.csv");

  summary.spectral = report;
  summary.cyclic = is_cyclic(built.unitary);
  if (built.coin_config) summary.generic = is_generic(*built.coin_config).generic;
}

inline void run_oracle_check(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  const auto built = cfg.walk.build();
  const int d = built.unitary.d();
  const ReservoirSymbol symbol = cfg.reservoir.build();
  const bool shift_walk = cfg.walk.kind == WalkSpec::Kind::shift;
  const bool uniform = symbol.is_uniform();
  const bool vacuum = cfg.initial.kind == InitialSpec::Kind::vacuum;
  if (!uniform && !shift_walk)
    throw std::invalid_argument(
        "oracle-check: correlated reservoirs have reduced predictions only for the shift walk");

  const OracleRecord oracle = simulate(symbol, cfg.initial.sample_state(d), built.unitary,
                                       cfg.alpha, cfg.steps, cfg.oracle_reservoir_modes);

  // Reduced predictions.
  const OneBodyDensity rho1_0 = cfg.initial.one_body(d);
  const TwoBodyDensity rho2_0 =
      TwoBodyDensity::from_matrix(d, gamma_on_wedge(rho1_0.matrix(), 2));
  std::vector<Mat> pred1, pred2;
  if (uniform) {
    const EffectiveMatrices eff =
        build_effective(built.unitary, CouplingParams::from_alpha(cfg.alpha), symbol);
    OneBodyDensity rho1 = rho1_0;
    TwoBodyDensity rho2 = rho2_0;
    for (long t = 0; t <= cfg.steps; ++t) {
      pred1.push_back(rho1.matrix());
      pred2.push_back(rho2.matrix());
      if (t == cfg.steps) break;
      rho2 = step2(rho2, rho1, eff);
      rho1 = step(rho1, eff);
    }
  }

  std::vector<std::string> header = {"t"};
  if (uniform) {
    header.push_back("res_one");
    header.push_back("res_two");
  }
  if (shift_walk) {
    header.push_back("res_strobe_one");
    header.push_back("res_strobe_two");
  }
  if (shift_walk && uniform) header.push_back("res_flux_formula");
  if (shift_walk && uniform && vacuum) header.push_back("res_pmf");
  header.push_back("res_flux_consistency");
  header.push_back("odd_correlator");

  std::map<std::string, double> worst;
  auto note = [&](const std::string& key, double value) {
    auto [it, inserted] = worst.emplace(key, value);
    if (!inserted) it->second = std::max(it->second, value);
    return format_double(value);
  };

  CsvTable series(header);
  for (long t = 0; t <= cfg.steps; ++t) {
    std::vector<std::string> row = {std::to_string(t)};
    if (uniform) {
      row.push_back(note("res_one", max_abs(oracle.rho1[std::size_t(t)] - pred1[std::size_t(t)])));
      row.push_back(note("res_two", max_abs(oracle.rho2[std::size_t(t)] - pred2[std::size_t(t)])));
    }
    if (shift_walk) {
      if (t % d == 0) {
        const long m = t / d;
        const Mat strobe1 = one_body_at(symbol, rho1_0, cfg.alpha, m).matrix();
        const Mat strobe2 = two_body_at(symbol, rho1_0, rho2_0, cfg.alpha, m).matrix();
        row.push_back(note("res_strobe_one", max_abs(oracle.rho1[std::size_t(t)] - strobe1)));
        row.push_back(note("res_strobe_two", max_abs(oracle.rho2[std::size_t(t)] - strobe2)));
      } else {
        row.push_back("");
        row.push_back("");
      }
    }
    if (shift_walk && uniform) {
      std::vector<double> occ(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) occ[std::size_t(j)] = rho1_0.matrix()(j, j).real();
      const FluxRecord flux = flux_expectation(t, cfg.reservoir.sigma, cfg.alpha, d, occ);
      row.push_back(note("res_flux_formula",
                         std::abs(oracle.flux[std::size_t(t)] - flux.expectation)));
    }
    if (shift_walk && uniform && vacuum) {
      if (t % d == 0) {
        const NumberDistribution dist =
            number_distribution(t / d, cfg.reservoir.sigma, cfg.alpha, d);
        double res = 0.0;
        for (int p = 0; p <= d; ++p)
          res = std::max(res, std::abs(oracle.number_pmf[std::size_t(t)](p) -
                                       dist.pmf[std::size_t(p)]));
        row.push_back(note("res_pmf", res));
      } else {
        row.push_back("");
      }
    }
    if (t < cfg.steps) {
      const double balance =
          std::abs(oracle.flux[std::size_t(t)] - (oracle.reservoir_number[std::size_t(t) + 1] -
                                                  oracle.reservoir_number[std::size_t(t)]));
      row.push_back(note("res_flux_consistency", balance));
    } else {
      row.push_back("");
    }
    row.push_back(note("odd_correlator", oracle.odd_correlator[std::size_t(t)]));
    series.add_row(std::move(row));
  }
  series.write(ctx.out_dir / "series.csv");

  summary.oracle_residuals = worst;
  double worst_value = 0.0;
  std::string worst_key;
  for (const auto& [key, value] : worst)
    if (value > worst_value) {
      worst_value = value;
      worst_key = key;
    }
  summary.oracle_pass = worst_value <= cfg.tolerance;
  if (!*summary.oracle_pass) {
    std::ostringstream msg;
    msg << "oracle-check: residual " << worst_key << " = " << worst_value
        << " exceeds tolerance " << cfg.tolerance;
    throw numeric_error(msg.str());
  }
}

inline void run_sweep(const RunContext& ctx, RunSummary& summary) {
  const auto& cfg = ctx.config;
  const SweepSpec& grids = *cfg.sweep;

  struct Row {
    double alpha = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    SpectralReport report;
    bool cyclic = false;
    double fitted_rate = 0.0;
    double final_distance = 0.0;
  };
  struct Job {
    double alpha;
    double sigma;
    std::uint64_t seed;
  };
  std::vector<Job> jobs_list;
  for (double a : grids.alpha)
    for (double s : grids.sigma)
      for (std::uint64_t seed : grids.seeds) jobs_list.push_back({a, s, seed});

  std::vector<Row> rows(jobs_list.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs_list.size()) break;
      try {
        const Job& job = jobs_list[i];
        const auto built = cfg.walk.build(job.seed);
        const int d = built.unitary.d();
        const EffectiveMatrices eff = build_effective(
            built.unitary, CouplingParams::from_alpha(job.alpha), job.sigma);
        const EvolutionTrace trace =
            evolve(cfg.initial.one_body(d), eff, cfg.steps, cfg.record_every);
        Row row;
        row.alpha = job.alpha;
        row.sigma = job.sigma;
        row.seed = job.seed;
        row.report = spectral_report(eff.M);
        row.cyclic = is_cyclic(built.unitary);
        row.fitted_rate = fit_decay_rate(trace.times, trace.distances_to_limit);
        row.final_distance = trace.distances_to_limit.back();
        rows[i] = std::move(row);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int worker_count =
      std::max(1, std::min<int>(ctx.jobs, int(jobs_list.size())));
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(worker_count));
  for (int i = 0; i < worker_count; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  CsvTable table({"alpha", "sigma", "seed", "spectral_radius", "gap", "condition_ok", "cyclic",
                  "fitted_rate", "predicted_rate", "final_distance"});
  for (const Row& row : rows)
    table.add_row({format_double(row.alpha), format_double(row.sigma), std::to_string(row.seed),
                   format_double(row.report.spectral_radius),
                   format_double(row.report.gap_to_unit_circle),
                   format_bool(row.report.condition_ok), format_bool(row.cyclic),
                   format_double(row.fitted_rate),
                   format_double(row.report.spectral_radius * row.report.spectral_radius),
                   format_double(row.final_distance)});
  table.write(ctx.out_dir / "table.csv");

  summary.table_rows = long(rows.size());
}

}  // namespace detail

// Executes the configured experiment, writing series.csv / table.csv /
// summary.json into out_dir, and returns the summary. Exceptions map to
// process exit codes at the CLI boundary: invalid configuration or
// precondition -> 2, numeric failure -> 3, resource limits -> 4.
inline RunSummary run(const ExperimentConfig& config,
                      const std::filesystem::path& out_dir = ".", int jobs = 0,
                      bool verbose = false) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  detail::RunContext ctx{config, out_dir,
                         jobs > 0 ? jobs : int(std::max(1u, std::thread::hardware_concurrency())),
                         verbose};
  RunSummary summary;
  summary.mode = to_string(config.mode);
  summary.config_echo = config.to_json();

  auto finalize = [&]() {
    summary.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw std::runtime_error("run: cannot open summary.json for writing");
    out << summary.to_json().dump(2) << "\n";
  };

  try {
    switch (config.mode) {
      case RunMode::evolve1: detail::run_evolve1(ctx, summary); break;
      case RunMode::evolve2: detail::run_evolve2(ctx, summary); break;
      case RunMode::shift_exact: detail::run_shift_exact(ctx, summary); break;
      case RunMode::ris_stats: detail::run_ris_stats(ctx, summary); break;
      case RunMode::oracle_check: detail::run_oracle_check(ctx, summary); break;
      case RunMode::spectral: detail::run_spectral(ctx, summary); break;
      case RunMode::sweep: detail::run_sweep(ctx, summary); break;
    }
  } catch (...) {
    // Leave whatever diagnostics were produced on disk, including the
    // summary of a failed oracle check.
    finalize();
    throw;
  }
  finalize();
  return summary;
}

inline RunSummary run_config_file(const std::filesystem::path& config_path,
                                  const std::filesystem::path& out_dir = ".", int jobs = 0,
                                  bool verbose = false) {
  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("config file not found: " + config_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  ExperimentConfig config;
  try {
    config = ExperimentConfig::from_json(j, config_path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return run(config, out_dir, jobs, verbose);
}

}  // namespace fermiwalk
