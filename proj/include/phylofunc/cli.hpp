#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phylofunc/error.hpp"
#include "phylofunc/hyperfit.hpp"
#include "phylofunc/ou_kernel.hpp"
#include "phylofunc/source_sep.hpp"

namespace phylofunc::cli {

enum class BasisSource { kTrue, kEstimated };

BasisSource ParseBasisSource(const std::string& name);
std::string ToString(BasisSource source);

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t n_tips = 128;
  double ig_mu = 0.5;
  double ig_lambda = 0.5;
  long grid_size = 1024;
  std::optional<std::vector<OUHyperParams>> params;
  DimensionMethod dim_method = DimensionMethod::kLaplace;
  BasisSource basis = BasisSource::kTrue;
  FreeParam free_param = FreeParam::kSigmaF;
  std::optional<double> ratio;
  std::optional<std::size_t> component;  // 1-based; all components when absent
  std::filesystem::path in_dir = ".";
  std::filesystem::path out_dir = ".";
};

/// Accepts a JSON array of parameter objects, an object with a "params" array
/// (such as traits.json), inline text or a path to a file holding either.
std::vector<OUHyperParams> ParseParamsArgument(const std::string& text_or_path);

struct CommandResult {
  std::vector<std::string> files;  // written, relative to out_dir
  nlohmann::json summary;
};

/// Writes tree.nwk, basis.csv, weights.csv, traits.csv, traits.json.
CommandResult CmdSimulate(const RunConfig& config);
/// Reads traits.csv; writes est_basis.csv, tip_weights.csv, mean_curve.csv,
/// diagnostics.json.
CommandResult CmdDecompose(const RunConfig& config);
/// Reads tree.nwk plus either basis.csv/weights.csv (true basis) or the
/// decompose outputs; writes posteriors.csv and posteriors.json.
CommandResult CmdReconstruct(const RunConfig& config);
/// Writes profile_<param>[_c<i>].csv and mle.json. Throws
/// NonIdentifiableError after writing every identifiable component.
CommandResult CmdEstimate(const RunConfig& config);
/// simulate, decompose, reconstruct and estimate into one directory, plus
/// summary.json.
CommandResult CmdPipeline(const RunConfig& config);

/// Dispatches on config.command and records the run in provenance.json.
CommandResult RunCommand(const RunConfig& config);

/// 0 success, 2 invalid config, 3 numerical failure, 4 non-identifiable.
int ExitCode(ErrorKind kind);

}  // namespace phylofunc::cli
