#include "phylofunc/cli.hpp"

#include <cmath>
#include <limits>

#include "phylofunc/csv.hpp"
#include "phylofunc/phylo_gp.hpp"
#include "phylofunc/phylo_tree.hpp"
#include "phylofunc/trait_sim.hpp"

#ifndef PHYLOFUNC_VERSION
#define PHYLOFUNC_VERSION "unknown"
#endif

namespace phylofunc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

BasisSource ParseBasisSource(const std::string& name) {
  if (name == "true") return BasisSource::kTrue;
  if (name == "estimated") return BasisSource::kEstimated;
  throw InvalidInput("basis must be 'true' or 'estimated', got '" + name + "'");
}

std::string ToString(BasisSource source) { return source == BasisSource::kTrue ? "true" : "estimated"; }

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
      return 2;
    case ErrorKind::kNumerical:
      return 3;
    case ErrorKind::kNonIdentifiable:
      return 4;
  }
  return 1;
}

std::vector<OUHyperParams> ParseParamsArgument(const std::string& text_or_path) {
  const auto first = text_or_path.find_first_not_of(" \t\r\n");
  const bool inline_json = first != std::string::npos && (text_or_path[first] == '[' || text_or_path[first] == '{');
  const std::string text = inline_json ? text_or_path : csv::ReadFile(text_or_path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("params are not valid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("params")) j = j["params"];
  if (j.is_object()) j = json::array({j});
  if (!j.is_array() || j.empty()) throw InvalidInput("params must be a non-empty list of parameter objects");
  std::vector<OUHyperParams> out;
  for (const auto& entry : j) out.push_back(OUHyperParamsFromJson(entry));
  return out;
}

namespace {

std::string ReadInput(const RunConfig& config, const std::string& name) {
  const fs::path path = config.in_dir / name;
  if (!fs::is_regular_file(path)) throw InvalidInput("missing input file " + path.string());
  return csv::ReadFile(path);
}

bool HasInput(const RunConfig& config, const std::string& name) { return fs::is_regular_file(config.in_dir / name); }

std::string Dump(const json& j) { return j.dump(2) + "\n"; }

void Emit(const RunConfig& config, CommandResult& result, const std::string& name, const std::string& contents) {
  fs::create_directories(config.out_dir);
  csv::WriteFile(config.out_dir / name, contents);
  result.files.push_back(name);
}

json ParamsJson(const std::vector<OUHyperParams>& params) {
  json j = json::array();
  for (const auto& p : params) j.push_back(ToJson(p));
  return j;
}

json FlagsJson(const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["tips"] = config.n_tips;
  j["ig_mu"] = config.ig_mu;
  j["ig_lambda"] = config.ig_lambda;
  j["grid_size"] = config.grid_size;
  j["params"] = config.params ? ParamsJson(*config.params) : json(nullptr);
  j["dim_method"] = ToString(config.dim_method);
  j["basis"] = ToString(config.basis);
  j["free_param"] = ToString(config.free_param);
  j["ratio"] = config.ratio ? json(*config.ratio) : json(nullptr);
  j["component"] = config.component ? json(*config.component) : json(nullptr);
  return j;
}

// Seed of the simulation that produced the inputs, when known.
json InputSeed(const RunConfig& config) {
  if (!HasInput(config, "traits.json")) return nullptr;
  try {
    const json sidecar = json::parse(ReadInput(config, "traits.json"));
    return sidecar.value("seed", json(nullptr));
  } catch (const json::exception&) {
    return nullptr;
  }
}

void RecordProvenance(const RunConfig& config, const std::string& command, const json& entry) {
  const fs::path path = config.out_dir / "provenance.json";
  json j = json::object();
  if (fs::is_regular_file(path)) {
    try {
      j = json::parse(csv::ReadFile(path));
    } catch (const json::exception&) {
      j = json::object();
    }
    if (!j.is_object()) j = json::object();
  }
  j["version"] = PHYLOFUNC_VERSION;
  j["commands"][command] = entry;
  fs::create_directories(config.out_dir);
  csv::WriteFile(path, Dump(j));
}

void RecordSuccess(const RunConfig& config, const std::string& command, const CommandResult& result) {
  json entry;
  entry["status"] = "ok";
  entry["flags"] = FlagsJson(config);
  entry["input_seed"] = InputSeed(config);
  entry["files"] = result.files;
  RecordProvenance(config, command, entry);
}

Eigen::VectorXd GridFromTraits(const std::string& text) {
  const auto rows = csv::Parse(text.substr(0, text.find('\n')));
  if (rows.empty() || rows[0].size() < 4) throw InvalidInput("traits file has no grid header");
  Eigen::VectorXd grid(static_cast<Eigen::Index>(rows[0].size() - 2));
  for (std::size_t j = 2; j < rows[0].size(); ++j) grid(static_cast<Eigen::Index>(j - 2)) = csv::ParseDouble(rows[0][j]);
  return grid;
}

std::string TipWeightsToCsv(const std::vector<std::string>& names, const Eigen::MatrixXd& weights) {
  csv::Row header{"node"};
  for (Eigen::Index i = 0; i < weights.cols(); ++i) header.push_back("w" + std::to_string(i + 1));
  std::string out = csv::JoinRow(header);
  for (std::size_t r = 0; r < names.size(); ++r) {
    csv::Row row{names[r]};
    for (Eigen::Index i = 0; i < weights.cols(); ++i) row.push_back(csv::FormatDouble(weights(static_cast<Eigen::Index>(r), i)));
    out += csv::JoinRow(row);
  }
  return out;
}

Decomposition LoadDecomposition(const RunConfig& config, const PhyloTree& tree) {
  Decomposition d;
  if (config.basis == BasisSource::kTrue) {
    d.basis = BasisFromCsv(ReadInput(config, "basis.csv"));
    d.tip_weights = WeightsFromCsv(tree, ReadInput(config, "weights.csv"), tree.tips());
    d.mean_curve = Eigen::RowVectorXd::Zero(d.basis.m());
  } else {
    d.basis = BasisFromCsv(ReadInput(config, "est_basis.csv"));
    d.tip_weights = WeightsFromCsv(tree, ReadInput(config, "tip_weights.csv"), tree.tips());
    const BasisSet mean = BasisFromCsv(ReadInput(config, "mean_curve.csv"));
    if (mean.k() != 1 || mean.m() != d.basis.m()) throw InvalidInput("mean_curve.csv does not match est_basis.csv");
    d.mean_curve = mean.curves.row(0);
  }
  if (d.tip_weights.cols() != d.basis.k()) throw InvalidInput("tip weights and basis differ in component count");
  return d;
}

struct ResolvedParams {
  std::vector<OUHyperParams> params;
  json alignment = nullptr;
  std::string source;
};

// Hyperparameters for each component of `basis`: given explicitly, or the
// simulation truth from traits.json. For an estimated basis the truth is
// carried over through the alignment: a row matching sign * scale * truth_j
// has weights w_j / (sign * scale), so both sigmas divide by the scale.
ResolvedParams ResolveParams(const RunConfig& config, const BasisSet& basis) {
  ResolvedParams out;
  if (config.params) {
    out.params = *config.params;
    out.source = "given";
  } else {
    if (!HasInput(config, "traits.json")) {
      throw InvalidInput("hyperparameters are required: pass --params or provide traits.json in the input directory");
    }
    const json sidecar = json::parse(ReadInput(config, "traits.json"));
    const auto truth = ParseParamsArgument(sidecar.dump());
    if (config.basis == BasisSource::kTrue) {
      out.params = truth;
      out.source = "simulation";
    } else {
      const BasisSet true_basis = BasisFromCsv(ReadInput(config, "basis.csv"));
      if (true_basis.k() != basis.k()) {
        throw InvalidInput("estimated basis has " + std::to_string(basis.k()) + " components but the truth has " +
                           std::to_string(true_basis.k()) + "; pass --params explicitly");
      }
      const AlignmentReport report = AlignComponents(basis, true_basis);
      for (Eigen::Index i = 0; i < basis.k(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        OUHyperParams p = truth.at(static_cast<std::size_t>(report.permutation[ui]));
        p.sigma_f /= report.scales[ui];
        p.sigma_n /= report.scales[ui];
        out.params.push_back(p);
      }
      out.alignment = {{"permutation", report.permutation},
                       {"signs", report.signs},
                       {"scales", report.scales},
                       {"correlations", report.correlations}};
      out.source = "simulation, transferred through alignment";
    }
  }
  if (static_cast<Eigen::Index>(out.params.size()) != basis.k()) {
    throw InvalidInput("expected " + std::to_string(basis.k()) + " parameter sets, got " +
                       std::to_string(out.params.size()));
  }
  return out;
}

double FreeValue(const OUHyperParams& p, FreeParam which) {
  switch (which) {
    case FreeParam::kSigmaF:
      return p.sigma_f;
    case FreeParam::kSigmaN:
      return p.sigma_n;
    case FreeParam::kLambda:
      return p.lambda.value_or(std::numeric_limits<double>::quiet_NaN());
  }
  return 0.0;
}

}  // namespace

CommandResult CmdSimulate(const RunConfig& config) {
  ScenarioConfig sc;
  sc.n_tips = config.n_tips;
  sc.ig_mu = config.ig_mu;
  sc.ig_shape = config.ig_lambda;
  sc.grid_size = config.grid_size;
  if (config.params) sc.params = *config.params;
  const Scenario s = SimulateScenario(config.seed, sc);

  CommandResult result;
  Emit(config, result, "tree.nwk", SerializeNewick(s.tree) + "\n");
  Emit(config, result, "basis.csv", BasisToCsv(s.basis));
  Emit(config, result, "weights.csv", WeightsToCsv(s.tree, s.weights.weights, s.tree.all_nodes()));
  Emit(config, result, "traits.csv", TraitsToCsv(s.tree, s.dataset));
  json sidecar = TraitsSidecar(s.dataset);
  sidecar["tips"] = config.n_tips;
  sidecar["ig_mu"] = config.ig_mu;
  sidecar["ig_lambda"] = config.ig_lambda;
  Emit(config, result, "traits.json", Dump(sidecar));

  const TipDistanceStats stats = TipDistanceSummary(s.tree);
  result.summary = {{"nodes", s.tree.size()},
                    {"train", s.tree.tips().size()},
                    {"validate", s.tree.size() - s.tree.tips().size()},
                    {"max_tip_distance", stats.max},
                    {"mean_tip_distance", stats.mean}};
  RecordSuccess(config, "simulate", result);
  return result;
}

CommandResult CmdDecompose(const RunConfig& config) {
  const std::string traits = ReadInput(config, "traits.csv");
  std::vector<std::string> names;
  const Eigen::MatrixXd curves = TrainCurvesFromCsv(traits, &names);
  const PCAResult pca = RunPca(curves, config.dim_method);
  ICAResult ica = RunIca(pca, curves);
  ica.estimated_basis.grid = GridFromTraits(traits);
  const double error = ReconstructionError(ica, curves);

  CommandResult result;
  Emit(config, result, "est_basis.csv", BasisToCsv(ica.estimated_basis));
  Emit(config, result, "tip_weights.csv", TipWeightsToCsv(names, ica.tip_weights));
  Emit(config, result, "mean_curve.csv", BasisToCsv(BasisSet{ica.mean_curve, ica.estimated_basis.grid}));
  json diagnostics = IcaDiagnostics(pca, ica, error);
  diagnostics["seed"] = config.seed;
  diagnostics["input_seed"] = InputSeed(config);
  Emit(config, result, "diagnostics.json", Dump(diagnostics));

  result.summary = {{"estimated_k", pca.estimated_k},
                    {"reconstruction_error", error},
                    {"low_cumulant", ica.low_cumulant}};
  RecordSuccess(config, "decompose", result);
  return result;
}

CommandResult CmdReconstruct(const RunConfig& config) {
  const PhyloTree tree = ParseNewick(ReadInput(config, "tree.nwk"));
  const Decomposition decomposition = LoadDecomposition(config, tree);
  const ResolvedParams resolved = ResolveParams(config, decomposition.basis);
  const auto posteriors = ReconstructAll(tree, decomposition, resolved.params);

  CommandResult result;
  Emit(config, result, "posteriors.csv", PosteriorsToCsv(tree, posteriors));

  json sidecar;
  sidecar["seed"] = config.seed;
  sidecar["input_seed"] = InputSeed(config);
  sidecar["basis"] = ToString(config.basis);
  sidecar["params"] = ParamsJson(resolved.params);
  sidecar["params_source"] = resolved.source;
  sidecar["alignment"] = resolved.alignment;
  sidecar["nodes"] = posteriors.size();
  json coverage = nullptr;
  if (HasInput(config, "traits.csv")) {
    const TraitDataset truth = TraitsFromCsv(tree, ReadInput(config, "traits.csv"));
    const std::vector<NodeId> validate = tree.internal_nodes();
    coverage = {{"nodes", validate.size()},
                {"within_1sd", Coverage(posteriors, truth.curves, validate, 1.0)},
                {"within_2sd", Coverage(posteriors, truth.curves, validate, 2.0)}};
  }
  sidecar["validation_coverage"] = coverage;
  Emit(config, result, "posteriors.json", Dump(sidecar));

  result.summary = {{"nodes", posteriors.size()}, {"validation_coverage", coverage}};
  RecordSuccess(config, "reconstruct", result);
  return result;
}

CommandResult CmdEstimate(const RunConfig& config) {
  const PhyloTree tree = ParseNewick(ReadInput(config, "tree.nwk"));
  const Decomposition decomposition = LoadDecomposition(config, tree);
  const ResolvedParams resolved = ResolveParams(config, decomposition.basis);
  const std::size_t k = resolved.params.size();

  std::vector<std::size_t> components;
  if (config.component) {
    if (*config.component < 1 || *config.component > k) {
      throw InvalidInput("component must be between 1 and " + std::to_string(k));
    }
    components.push_back(*config.component - 1);
  } else {
    for (std::size_t i = 0; i < k; ++i) components.push_back(i);
  }

  const std::string param = config.ratio ? "sigma_f" : ToString(config.free_param);
  const double mean_tip_distance = TipDistanceSummary(tree).mean;
  CommandResult result;
  json entries = json::array();
  std::optional<NonIdentifiableError> failure;
  for (const std::size_t i : components) {
    OUHyperParams fixed = resolved.params[i];
    const double truth = config.ratio ? fixed.sigma_f : FreeValue(fixed, config.free_param);
    bool lambda_filled = false;
    if (!fixed.lambda && (config.ratio || config.free_param != FreeParam::kLambda)) {
      fixed.lambda = mean_tip_distance;
      lambda_filled = true;
    }
    const Eigen::VectorXd y = decomposition.tip_weights.col(static_cast<Eigen::Index>(i));
    const std::string file =
        components.size() == 1 ? "profile_" + param + ".csv" : "profile_" + param + "_c" + std::to_string(i + 1) + ".csv";
    json entry;
    entry["component"] = i + 1;
    entry["true_value"] = std::isfinite(truth) ? json(truth) : json(nullptr);
    entry["lambda_filled_with_mean_tip_distance"] = lambda_filled;
    entry["profile_file"] = file;
    try {
      const MLEResult mle =
          config.ratio ? RatioMle(tree, y, *fixed.lambda, *config.ratio, DefaultBounds(tree, FreeParam::kSigmaF))
                       : ProfileMle(tree, y, config.free_param, fixed, DefaultBounds(tree, config.free_param));
      Emit(config, result, file, ProfileToCsv(mle.profile));
      entry.update(ToJson(mle));
      entry["non_identifiable"] = false;
      if (config.ratio) entry["closed_form"] = RatioClosedFormSigmaF(tree, y, *fixed.lambda, *config.ratio);
    } catch (const NonIdentifiableError& e) {
      Emit(config, result, file, ProfileToCsv(e.profile()));
      entry["non_identifiable"] = true;
      entry["message"] = e.what();
      if (!failure) failure.emplace("component " + std::to_string(i + 1) + ": " + e.what(), e.profile());
    }
    entries.push_back(entry);
  }

  json mle;
  mle["seed"] = config.seed;
  mle["input_seed"] = InputSeed(config);
  mle["basis"] = ToString(config.basis);
  mle["free_param"] = param;
  mle["ratio"] = config.ratio ? json(*config.ratio) : json(nullptr);
  mle["params"] = ParamsJson(resolved.params);
  mle["params_source"] = resolved.source;
  mle["components"] = entries;
  Emit(config, result, "mle.json", Dump(mle));
  result.summary = entries;
  RecordSuccess(config, "estimate", result);
  if (failure) throw *failure;
  return result;
}

CommandResult CmdPipeline(const RunConfig& config) {
  RunConfig stage = config;
  stage.in_dir = config.out_dir;

  CommandResult result;
  const auto absorb = [&](const CommandResult& part) {
    result.files.insert(result.files.end(), part.files.begin(), part.files.end());
  };
  const CommandResult simulated = CmdSimulate(stage);
  absorb(simulated);
  const CommandResult decomposed = CmdDecompose(stage);
  absorb(decomposed);
  const CommandResult reconstructed = CmdReconstruct(stage);
  absorb(reconstructed);

  json summary;
  summary["seed"] = config.seed;
  summary["basis"] = ToString(config.basis);
  summary["dim_method"] = ToString(config.dim_method);
  summary["estimated_k"] = decomposed.summary["estimated_k"];
  summary["reconstruction_error"] = decomposed.summary["reconstruction_error"];
  summary["low_cumulant"] = decomposed.summary["low_cumulant"];
  summary["validation_coverage"] = reconstructed.summary["validation_coverage"];
  summary["tree"] = simulated.summary;

  const BasisSet truth = BasisFromCsv(ReadInput(stage, "basis.csv"));
  const BasisSet estimated = BasisFromCsv(ReadInput(stage, "est_basis.csv"));
  if (truth.k() == estimated.k()) {
    const AlignmentReport report = AlignComponents(estimated, truth);
    summary["alignment"] = {{"permutation", report.permutation},
                            {"signs", report.signs},
                            {"scales", report.scales},
                            {"correlations", report.correlations}};
  } else {
    summary["alignment"] = nullptr;
  }

  std::optional<NonIdentifiableError> failure;
  try {
    const CommandResult estimated_params = CmdEstimate(stage);
    absorb(estimated_params);
    summary["estimates"] = estimated_params.summary;
  } catch (const NonIdentifiableError& e) {
    summary["estimates"] = json::parse(ReadInput(stage, "mle.json"))["components"];
    failure.emplace(e.what(), e.profile());
  }
  Emit(config, result, "summary.json", Dump(summary));
  result.summary = summary;
  RecordSuccess(config, "pipeline", result);
  if (failure) throw *failure;
  return result;
}

CommandResult RunCommand(const RunConfig& config) {
  try {
    if (config.command == "simulate") return CmdSimulate(config);
    if (config.command == "decompose") return CmdDecompose(config);
    if (config.command == "reconstruct") return CmdReconstruct(config);
    if (config.command == "estimate") return CmdEstimate(config);
    if (config.command == "pipeline") return CmdPipeline(config);
  } catch (const NonIdentifiableError&) {
    throw;  // partial outputs were recorded by the command itself
  } catch (const Error& e) {
    if (fs::is_directory(config.out_dir)) {
      RecordProvenance(config, config.command,
                       {{"status", "failed"}, {"exit_code", ExitCode(e.kind())}, {"flags", FlagsJson(config)}});
    }
    throw;
  }
  throw InvalidInput("unknown command '" + config.command + "'");
}

}  // namespace phylofunc::cli
