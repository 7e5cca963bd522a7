// Command-line front end: runs one experiment described by a JSON config
// and writes series.csv / table.csv / summary.json into the output
// directory.
//
// Exit codes:
//   0  success
//   1  unexpected error
//   2  invalid configuration or violated precondition
//   3  numeric failure (residual above tolerance, non-convergent setup)
//   4  resource limit (state space too large, allocation failure)

#include "fermiwalk/fermiwalk.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <new>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"fermiwalk: fermionic quantum walkers coupled to a fermionic reservoir"};

  std::string config_path;
  std::string out_dir = ".";
  int jobs = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON experiment configuration")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (created if missing)");
  app.add_option("--jobs", jobs, "worker threads for sweeps (0 = hardware)");
  app.add_flag("--verbose", verbose, "print the summary to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message / help text
    return code == 0 ? 0 : 2;      // --help is a ParseError with exit code 0
  }

  try {
    const fermiwalk::RunSummary summary =
        fermiwalk::run_config_file(config_path, out_dir, jobs, verbose);
    if (verbose) std::cout << summary.to_json().dump(2) << "\n";
    return 0;
  } catch (const fermiwalk::resource_limit_error& e) {
    std::cerr << "error (resource limit): " << e.what() << "\n";
    return 4;
  } catch (const std::bad_alloc& e) {
    std::cerr << "error (resource limit): allocation failed: " << e.what() << "\n";
    return 4;
  } catch (const fermiwalk::numeric_error& e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
