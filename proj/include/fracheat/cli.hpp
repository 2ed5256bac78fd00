#pragma once

#include "fracheat/extension_solver.hpp"
#include "fracheat/lab.hpp"
#include "fracheat/mild_solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracheat::cli {

/// Bad configuration: unknown key, missing key, unparsable or out-of-range value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Command { validate, simulate, extend, sweep, rate, report_data };
std::string to_string(Command c);
Command command_from_string(const std::string& s);

struct RunConfig {
  Command command = Command::simulate;
  mild::ProblemSpec problem;
  ext::ExtOptions ext;
  lab::SweepSpec sweep;
  lab::ValidationOptions validation;
  unsigned threads = 1;
  unsigned seed = 1;
  /// Every resolved key as "section.key = value", defaults included, in a fixed order.
  std::vector<std::string> provenance;

  std::size_t sweep_cells() const {
    return sweep.sigmas.size() * sweep.ps.size() * sweep.data_scales.size();
  }
};

/// Parses an INI document. `command` comes from the command line; a [run] command key,
/// when present, must agree with it.
RunConfig parse_config(const std::string& text, Command command);

enum ExitCode { exit_ok = 0, exit_solver_failure = 1, exit_invalid = 2 };

/// Executes the command and writes its artifacts under `out`.
int run(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// `fracheat <command> --config <path> [--out <dir>] [--threads k]`
int main(int argc, char** argv);

} // namespace fracheat::cli
