#include "fermiwalk/experiment.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace fermiwalk;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fermiwalk_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

nlohmann::json evolve1_reference_config() {
  return nlohmann::json{
      {"mode", "evolve1"},
      {"alpha", kPi / 3.0},
      {"reservoir", {{"type", "uniform"}, {"sigma", 0.3}}},
      {"walk", {{"type", "coined-periodic"}, {"n", 2}, {"coin_seed", 7}}},
      {"initial", {{"type", "vacuum"}}},
      {"steps", 200}};
}

}  // namespace

TEST_CASE("experiment config round-trips through JSON", "[experiment]") {
  nlohmann::json j = evolve1_reference_config();
  j["record_every"] = 2;
  j["tolerance"] = 1e-9;
  const ExperimentConfig config = ExperimentConfig::from_json(j);
  const nlohmann::json echo = config.to_json();
  const ExperimentConfig reparsed = ExperimentConfig::from_json(echo);
  CHECK(reparsed.to_json() == echo);
  CHECK(echo.at("mode") == "evolve1");
  CHECK(echo.at("walk").at("coin_seed") == 7);
}

TEST_CASE("experiment config validation", "[experiment]") {
  nlohmann::json base = evolve1_reference_config();

  auto must_fail = [](nlohmann::json j) {
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  };

  {
    nlohmann::json j = base;
    j["mode"] = "warp";
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j.erase("alpha");
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j["steps"] = -1;
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j["record_every"] = 0;
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j["tolerance"] = 0.0;
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j["walk"] = {{"type", "shift"}, {"d", 1}};
    must_fail(j);
  }
  {
    nlohmann::json j = base;
    j["mode"] = "sweep";  // without a sweep block
    must_fail(j);
  }
}

TEST_CASE("walk specs build the advertised unitaries", "[experiment]") {
  {
    WalkSpec spec;
    spec.kind = WalkSpec::Kind::shift;
    spec.d = 3;
    CHECK(max_abs(spec.build().unitary.matrix() - cyclic_shift_matrix(3)) == 0.0);
  }
  {
    WalkSpec spec;
    spec.kind = WalkSpec::Kind::identity;
    spec.d = 4;
    CHECK(max_abs(spec.build().unitary.matrix() - Mat::Identity(4, 4)) == 0.0);
  }
  {
    WalkSpec spec;
    spec.kind = WalkSpec::Kind::matrix;
    spec.entries = random_unitary(3, 2);
    CHECK(max_abs(spec.build().unitary.matrix() - spec.entries) == 0.0);
  }
  {
    WalkSpec spec;
    spec.kind = WalkSpec::Kind::coined_periodic;
    spec.n = 2;
    spec.coin_seed = 7;
    const auto built = spec.build();
    CHECK(built.unitary.d() == 4);
    REQUIRE(built.coin_config.has_value());
    // A seed override (used by sweeps) changes the coins.
    const auto other = spec.build(8);
    CHECK(max_abs(built.unitary.matrix() - other.unitary.matrix()) > 1e-6);
  }
}

TEST_CASE("initial specs produce consistent one-body data", "[experiment]") {
  InitialSpec vacuum;
  CHECK(max_abs(vacuum.one_body(3).matrix()) == 0.0);

  InitialSpec filling;
  filling.kind = InitialSpec::Kind::uniform_filling;
  filling.value = 0.25;
  CHECK(max_abs(filling.one_body(3).matrix() - 0.25 * Mat::Identity(3, 3)) == 0.0);

  InitialSpec matrix;
  matrix.kind = InitialSpec::Kind::matrix;
  matrix.entries = random_hermitian_with_spectrum(3, 64, 0.1, 0.9);
  CHECK(max_abs(matrix.one_body(3).matrix() - matrix.entries) < 1e-14);
  CHECK_THROWS_AS(matrix.one_body(4), std::invalid_argument);

  // The full sample state carries the same one-body data (quasifree lift).
  const SampleState state = matrix.sample_state(3);
  Mat recovered(3, 3);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      const Mat op = fock_annihilator(3, k).adjoint() * fock_annihilator(3, j);
      cplx acc = 0.0;
      for (std::size_t i = 0; i < state.states.size(); ++i)
        acc += state.weights[i] *
               (state.states[i].adjoint() * op * state.states[i])(0, 0);
      recovered(j, k) = acc;
    }
  CHECK(max_abs(recovered - matrix.entries) < 1e-11);
}

TEST_CASE("fit_decay_rate recovers an exact exponential", "[experiment]") {
  std::vector<long> times;
  std::vector<double> distances;
  for (long t = 0; t <= 40; ++t) {
    times.push_back(t);
    distances.push_back(3.0 * std::pow(0.81, double(t)));
  }
  CHECK(fit_decay_rate(times, distances) == Catch::Approx(0.81).epsilon(1e-9));

  // Too few usable points: no estimate.
  const std::vector<long> short_times{0, 1, 2, 3};
  const std::vector<double> short_dists{1.0, 0.5, 0.25, 0.125};
  CHECK(std::isnan(fit_decay_rate(short_times, short_dists)));
  CHECK_THROWS_AS(fit_decay_rate({0, 1}, {1.0}), std::invalid_argument);
}

TEST_CASE("evolve1 run: files, convergence, determinism", "[experiment]") {
  const ExperimentConfig config = ExperimentConfig::from_json(evolve1_reference_config());
  const fs::path dir1 = fresh_dir("evolve1_a");
  const RunSummary summary = run(config, dir1, 1);

  CHECK(fs::exists(dir1 / "series.csv"));
  CHECK(fs::exists(dir1 / "summary.json"));
  REQUIRE(summary.final_distance_one.has_value());
  CHECK(*summary.final_distance_one < 1e-8);
  REQUIRE(summary.spectral.has_value());
  CHECK(summary.spectral->condition_ok);
  REQUIRE(summary.cyclic.has_value());
  CHECK(*summary.cyclic);

  // The fitted contraction rate estimates the squared spectral radius.
  REQUIRE(summary.fitted_decay_rate.has_value());
  const double predicted = summary.spectral->spectral_radius * summary.spectral->spectral_radius;
  CHECK(std::abs(*summary.fitted_decay_rate - predicted) / predicted < 0.1);

  // Re-running the identical configuration reproduces the bytes.
  const fs::path dir2 = fresh_dir("evolve1_b");
  run(config, dir2, 1);
  CHECK(slurp(dir1 / "series.csv") == slurp(dir2 / "series.csv"));

  // The summary echoes the configuration verbatim.
  const nlohmann::json on_disk = nlohmann::json::parse(slurp(dir1 / "summary.json"));
  CHECK(on_disk.at("config") == config.to_json());
  CHECK(on_disk.at("mode") == "evolve1");

  // series.csv: header plus steps+1 rows.
  const std::string series = slurp(dir1 / "series.csv");
  CHECK(std::count(series.begin(), series.end(), '\n') == 202);
  CHECK(series.rfind("t,occupation_site0,distance_one", 0) == 0);
}

TEST_CASE("evolve2 run tracks both hierarchies", "[experiment]") {
  nlohmann::json j = evolve1_reference_config();
  j["mode"] = "evolve2";
  j["steps"] = 150;
  const fs::path dir = fresh_dir("evolve2");
  const RunSummary summary = run(ExperimentConfig::from_json(j), dir, 1);
  REQUIRE(summary.final_distance_one.has_value());
  REQUIRE(summary.final_distance_two.has_value());
  CHECK(*summary.final_distance_one < 1e-6);
  CHECK(*summary.final_distance_two < 1e-5);
}

TEST_CASE("shift-exact run reports the stationary profile", "[experiment]") {
  nlohmann::json j{
      {"mode", "shift-exact"},
      {"alpha", kPi / 3.0},
      {"reservoir",
       {{"type", "band"},
        {"coeffs", {{0.5, 0.0}, {0.2, 0.0}}}}},
      {"walk", {{"type", "shift"}, {"d", 2}}},
      {"initial", {{"type", "vacuum"}}},
      {"steps", 20}};
  const fs::path dir = fresh_dir("shift_exact");
  const RunSummary summary = run(ExperimentConfig::from_json(j), dir, 1);
  REQUIRE(summary.density.has_value());
  CHECK(*summary.density == Catch::Approx(0.5));
  REQUIRE(summary.final_distance_one.has_value());
  CHECK(*summary.final_distance_one < 1e-10);
  const std::string table = slurp(dir / "table.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);  // header + d^2 rows

  // Requires the shift walk.
  nlohmann::json bad = j;
  bad["walk"] = {{"type", "coined-periodic"}, {"n", 2}, {"coin_seed", 1}};
  const fs::path dir2 = fresh_dir("shift_exact_bad");
  CHECK_THROWS_AS(run(ExperimentConfig::from_json(bad), dir2, 1), std::invalid_argument);
}

TEST_CASE("ris-stats run produces the refresh statistics", "[experiment]") {
  nlohmann::json j{{"mode", "ris-stats"},
                   {"alpha", kPi / 3.0},
                   {"reservoir", {{"type", "uniform"}, {"sigma", 0.5}}},
                   {"walk", {{"type", "shift"}, {"d", 3}}},
                   {"initial", {{"type", "vacuum"}}},
                   {"steps", 30}};
  const fs::path dir = fresh_dir("ris_stats");
  run(ExperimentConfig::from_json(j), dir, 1);

  // The pmf table is a probability distribution over 0..d particles.
  std::ifstream table(dir / "table.csv");
  std::string line;
  std::getline(table, line);
  CHECK(line == "particles,probability");
  double total = 0.0;
  int rows = 0;
  while (std::getline(table, line)) {
    const auto comma = line.find(',');
    total += std::stod(line.substr(comma + 1));
    ++rows;
  }
  CHECK(rows == 4);
  CHECK(total == Catch::Approx(1.0).epsilon(1e-12));

  // Mode preconditions: shift walk, uniform reservoir, vacuum start.
  nlohmann::json bad = j;
  bad["initial"] = {{"type", "uniform-filling"}, {"value", 0.2}};
  CHECK_THROWS_AS(run(ExperimentConfig::from_json(bad), fresh_dir("ris_bad"), 1),
                  std::invalid_argument);
}

TEST_CASE("oracle-check run passes at the documented tolerance", "[experiment]") {
  nlohmann::json j{{"mode", "oracle-check"},
                   {"alpha", kPi / 3.0},
                   {"reservoir", {{"type", "uniform"}, {"sigma", 0.5}}},
                   {"walk", {{"type", "shift"}, {"d", 2}}},
                   {"initial", {{"type", "vacuum"}}},
                   {"steps", 3},
                   {"oracle", {{"reservoir_modes", 4}}},
                   {"tolerance", 1e-10}};
  const fs::path dir = fresh_dir("oracle_ok");
  const RunSummary summary = run(ExperimentConfig::from_json(j), dir, 1);
  REQUIRE(summary.oracle_pass.has_value());
  CHECK(*summary.oracle_pass);
  REQUIRE_FALSE(summary.oracle_residuals.empty());
  for (const auto& [key, value] : summary.oracle_residuals) {
    INFO(key);
    CHECK(value < 1e-10);
  }
  // All prediction columns are present for this fully-covered configuration.
  const std::string header = slurp(dir / "series.csv").substr(
      0, slurp(dir / "series.csv").find('\n'));
  for (const char* column : {"res_one", "res_two", "res_strobe_one", "res_strobe_two",
                             "res_flux_formula", "res_pmf", "res_flux_consistency",
                             "odd_correlator"}) {
    INFO(column);
    CHECK(header.find(column) != std::string::npos);
  }
}

TEST_CASE("oracle-check failure still writes diagnostics, then throws", "[experiment]") {
  nlohmann::json j{{"mode", "oracle-check"},
                   {"alpha", 1.1},
                   {"reservoir", {{"type", "uniform"}, {"sigma", 0.5}}},
                   {"walk", {{"type", "shift"}, {"d", 2}}},
                   {"initial", {{"type", "vacuum"}}},
                   {"steps", 2},
                   {"tolerance", 1e-18}};
  const fs::path dir = fresh_dir("oracle_fail");
  CHECK_THROWS_AS(run(ExperimentConfig::from_json(j), dir, 1), numeric_error);
  const nlohmann::json summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("oracle").at("pass") == false);
  CHECK(fs::exists(dir / "series.csv"));
}

TEST_CASE("oracle-check rejects correlated reservoirs off the shift walk", "[experiment]") {
  nlohmann::json j{{"mode", "oracle-check"},
                   {"alpha", 1.0},
                   {"reservoir",
                    {{"type", "band"},
                     {"coeffs", {{0.5, 0.0}, {0.2, 0.0}}}}},
                   {"walk", {{"type", "coined-periodic"}, {"n", 2}, {"coin_seed", 3}}},
                   {"initial", {{"type", "vacuum"}}},
                   {"steps", 2}};
  CHECK_THROWS_AS(run(ExperimentConfig::from_json(j), fresh_dir("oracle_band_bad"), 1),
                  std::invalid_argument);
}

TEST_CASE("spectral run tabulates the certificate", "[experiment]") {
  nlohmann::json j{{"mode", "spectral"},
                   {"alpha", kPi / 3.0},
                   {"walk", {{"type", "coined-periodic"}, {"n", 3}, {"coin_seed", 1}}}};
  const fs::path dir = fresh_dir("spectral");
  const RunSummary summary = run(ExperimentConfig::from_json(j), dir, 1);
  REQUIRE(summary.spectral.has_value());
  REQUIRE(summary.generic.has_value());
  CHECK(*summary.generic);
  const std::string table = slurp(dir / "table.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);  // header + 2n rows
}

TEST_CASE("sweep run: grid order, flags, parallel determinism", "[experiment]") {
  nlohmann::json j{{"mode", "sweep"},
                   {"walk", {{"type", "coined-periodic"}, {"n", 2}}},
                   {"initial", {{"type", "vacuum"}}},
                   {"steps", 150},
                   {"sweep",
                    {{"alpha", {0.0, kPi / 3.0}},
                     {"sigma", {0.5}},
                     {"seeds", {1, 2}}}}};
  const ExperimentConfig config = ExperimentConfig::from_json(j);
  const fs::path dir1 = fresh_dir("sweep_a");
  const RunSummary summary = run(config, dir1, 2);
  REQUIRE(summary.table_rows.has_value());
  CHECK(*summary.table_rows == 4);

  std::ifstream table(dir1 / "table.csv");
  std::string line;
  std::getline(table, line);
  CHECK(line ==
        "alpha,sigma,seed,spectral_radius,gap,condition_ok,cyclic,fitted_rate,"
        "predicted_rate,final_distance");
  int row_index = 0;
  while (std::getline(table, line)) {
    const bool alpha_zero = row_index < 2;  // alpha-major ordering
    if (alpha_zero) {
      CHECK(line.find("false") != std::string::npos);  // condition_ok false
    } else {
      CHECK(line.find("true") != std::string::npos);
    }
    ++row_index;
  }
  CHECK(row_index == 4);

  // Parallel and serial execution produce identical bytes.
  const fs::path dir2 = fresh_dir("sweep_b");
  run(config, dir2, 1);
  CHECK(slurp(dir1 / "table.csv") == slurp(dir2 / "table.csv"));
}

TEST_CASE("run_config_file maps missing and broken files to config errors",
          "[experiment]") {
  CHECK_THROWS_AS(run_config_file("/nonexistent/config.json", fresh_dir("cfg_missing"), 1),
                  std::invalid_argument);

  const fs::path dir = fresh_dir("cfg_broken");
  const fs::path broken = dir / "broken.json";
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(run_config_file(broken, dir, 1), std::invalid_argument);

  const fs::path incomplete = dir / "incomplete.json";
  std::ofstream(incomplete) << "{\"mode\": \"evolve1\"}";
  CHECK_THROWS_AS(run_config_file(incomplete, dir, 1), std::invalid_argument);
}

TEST_CASE("walk matrices can be loaded from a sidecar file", "[experiment]") {
  const fs::path dir = fresh_dir("cfg_matrix");
  const Mat u = random_unitary(3, 55);
  nlohmann::json matrix_file{{"entries", detail::matrix_to_json(u)}};
  std::ofstream(dir / "walk.json") << matrix_file.dump();

  nlohmann::json j{{"mode", "spectral"},
                   {"alpha", 1.0},
                   {"walk", {{"type", "matrix"}, {"file", "walk.json"}}}};
  std::ofstream(dir / "config.json") << j.dump();

  const RunSummary summary = run_config_file(dir / "config.json", dir / "out", 1);
  REQUIRE(summary.spectral.has_value());
  CHECK(summary.spectral->eigenvalues.size() == 3);
}

TEST_CASE("coin configurations round-trip through JSON", "[experiment]") {
  const CoinConfig config = random_coins(3, 17, Boundary::periodic);
  const CoinConfig back = coin_config_from_json(coin_config_to_json(config));
  REQUIRE(back.coins.size() == config.coins.size());
  for (std::size_t i = 0; i < config.coins.size(); ++i)
    CHECK(max_abs(back.coins[i] - config.coins[i]) == 0.0);
  CHECK(back.boundary == config.boundary);
}
