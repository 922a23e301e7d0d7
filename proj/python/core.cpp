#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phylofunc/cli.hpp"
#include "phylofunc/hyperfit.hpp"
#include "phylofunc/phylo_gp.hpp"
#include "phylofunc/source_sep.hpp"
#include "phylofunc/trait_sim.hpp"

namespace py = pybind11;
using namespace phylofunc;

namespace {

std::vector<NodeId> ToIds(const std::vector<std::size_t>& raw) {
  std::vector<NodeId> ids;
  for (const std::size_t v : raw) ids.push_back(NodeId{v});
  return ids;
}

std::vector<std::size_t> FromIds(const std::vector<NodeId>& ids) {
  std::vector<std::size_t> raw;
  for (const NodeId id : ids) raw.push_back(id.value);
  return raw;
}

py::dict MleDict(const MLEResult& r) {
  py::dict d;
  d["parameter"] = r.parameter_name;
  d["estimate"] = r.estimate;
  d["log_likelihood"] = r.log_likelihood_at_estimate;
  d["bracket"] = r.bracket;
  d["at_lower_bound"] = r.at_lower_bound;
  d["at_upper_bound"] = r.at_upper_bound;
  d["iterations"] = r.iterations;
  d["profile_grid"] = r.profile.grid;
  d["profile_log_likelihood"] = r.profile.log_likelihoods;
  return d;
}

Eigen::MatrixXd TipWeights(const PhyloTree& tree, const Eigen::MatrixXd& all) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tree.tips().size()), all.cols());
  for (std::size_t i = 0; i < tree.tips().size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(tree.tips()[i].value));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Phylogenetic Gaussian processes for function-valued traits.";

  static py::exception<Error> base(m, "PhylofuncError", PyExc_RuntimeError);
  static py::exception<Error> invalid(m, "InvalidInputError", base.ptr());
  static py::exception<Error> numerical(m, "NumericalError", base.ptr());
  static py::exception<Error> non_identifiable(m, "NonIdentifiableError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kInvalidInput:
          py::set_error(invalid, e.what());
          break;
        case ErrorKind::kNumerical:
          py::set_error(numerical, e.what());
          break;
        case ErrorKind::kNonIdentifiable:
          py::set_error(non_identifiable, e.what());
          break;
      }
    }
  });

  py::class_<PhyloTree>(m, "PhyloTree")
      .def_property_readonly("size", &PhyloTree::size)
      .def_property_readonly("root", [](const PhyloTree& t) { return t.root().value; })
      .def_property_readonly("tips", [](const PhyloTree& t) { return FromIds(t.tips()); })
      .def_property_readonly("internal_nodes", [](const PhyloTree& t) { return FromIds(t.internal_nodes()); })
      .def_property_readonly("missing_branch_lengths", &PhyloTree::missing_branch_lengths)
      .def("name", [](const PhyloTree& t, std::size_t i) { return t.name(NodeId{i}); })
      .def("find", [](const PhyloTree& t, const std::string& label) -> std::optional<std::size_t> {
        if (auto id = t.find(label)) return id->value;
        return std::nullopt;
      })
      .def("parent", [](const PhyloTree& t, std::size_t i) -> std::optional<std::size_t> {
        if (auto p = t.node(NodeId{i}).parent) return p->value;
        return std::nullopt;
      })
      .def("branch_length", [](const PhyloTree& t, std::size_t i) { return t.node(NodeId{i}).branch_length; })
      .def("depth", [](const PhyloTree& t, std::size_t i) { return t.depth(NodeId{i}); })
      .def("__len__", &PhyloTree::size)
      .def("__repr__", [](const PhyloTree& t) { return "<PhyloTree " + SerializeNewick(t) + ">"; });

  m.def("parse_newick", [](const std::string& text) { return ParseNewick(text); }, py::arg("text"));
  m.def("serialize_newick", &SerializeNewick, py::arg("tree"));
  m.def(
      "random_tree",
      [](std::size_t n_tips, double ig_mu, double ig_lambda, std::uint64_t seed, const std::string& topology) {
        if (topology != "yule" && topology != "uniform") throw InvalidInput("topology must be 'yule' or 'uniform'");
        return RandomTree(n_tips, ig_mu, ig_lambda, seed, topology == "yule" ? TopologyModel::kYule : TopologyModel::kUniform);
      },
      py::arg("n_tips"), py::arg("ig_mu") = 0.5, py::arg("ig_lambda") = 0.5, py::arg("seed") = 0,
      py::arg("topology") = "yule");
  m.def(
      "patristic_distances",
      [](const PhyloTree& tree, std::optional<std::vector<std::size_t>> nodes) {
        if (!nodes) return PatristicDistances(tree).entries;
        const auto ids = ToIds(*nodes);
        return PatristicDistances(tree, std::span<const NodeId>(ids)).entries;
      },
      py::arg("tree"), py::arg("nodes") = std::nullopt);
  m.def("tip_distance_summary", [](const PhyloTree& tree) {
    const auto s = TipDistanceSummary(tree);
    return py::make_tuple(s.max, s.mean);
  });

  py::class_<OUHyperParams>(m, "OUHyperParams")
      .def(py::init([](double sigma_f, std::optional<double> lambda, double sigma_n) {
             OUHyperParams p{sigma_f, lambda, sigma_n};
             p.Validate();
             return p;
           }),
           py::arg("sigma_f"), py::arg("lambda_") = std::nullopt, py::arg("sigma_n") = 0.0)
      .def_readwrite("sigma_f", &OUHyperParams::sigma_f)
      .def_readwrite("lambda_", &OUHyperParams::lambda)
      .def_readwrite("sigma_n", &OUHyperParams::sigma_n)
      .def("__eq__", [](const OUHyperParams& a, const OUHyperParams& b) { return a == b; })
      .def("__repr__", [](const OUHyperParams& p) { return "OUHyperParams(" + ToJson(p).dump() + ")"; });

  m.def("paper_hyperparams", &PaperHyperParams);
  m.def("ou_cov", &OUCov, py::arg("params"), py::arg("distance"), py::arg("same_node"));
  m.def(
      "build_cov_matrix",
      [](const OUHyperParams& p, const Eigen::MatrixXd& distances, bool include_self_delta) {
        DistanceMatrix d{{}, distances};
        return BuildCovMatrix(p, d, include_self_delta).entries;
      },
      py::arg("params"), py::arg("distances"), py::arg("include_self_delta") = true);
  m.def(
      "validate_psd",
      [](const Eigen::MatrixXd& matrix, double tolerance) {
        const auto r = ValidatePsd(matrix, tolerance);
        return py::make_tuple(r.min_eigenvalue, r.is_psd);
      },
      py::arg("matrix"), py::arg("tolerance") = 1e-10);

  m.def("default_basis", [](Eigen::Index m_points) {
    const BasisSet b = MakeDefaultBasis(m_points);
    return py::make_tuple(b.curves, b.grid);
  }, py::arg("m") = 1024);
  m.def(
      "sample_weights",
      [](const PhyloTree& tree, const std::vector<OUHyperParams>& params, std::uint64_t seed) {
        return SampleWeights(tree, params, seed).weights;
      },
      py::arg("tree"), py::arg("params"), py::arg("seed"));
  m.def(
      "simulate",
      [](std::uint64_t seed, std::size_t n_tips, Eigen::Index grid_size, std::optional<std::vector<OUHyperParams>> params) {
        ScenarioConfig config;
        config.n_tips = n_tips;
        config.grid_size = grid_size;
        if (params) config.params = *params;
        Scenario s = SimulateScenario(seed, config);
        py::dict d;
        d["basis"] = s.basis.curves;
        d["grid"] = s.basis.grid;
        d["weights"] = s.weights.weights;
        d["curves"] = s.dataset.curves;
        d["tip_weights"] = TipWeights(s.tree, s.weights.weights);
        d["train_curves"] = s.dataset.TrainCurves(s.tree);
        d["params"] = s.dataset.params;
        d["tree"] = std::move(s.tree);
        return d;
      },
      py::arg("seed"), py::arg("n_tips") = 128, py::arg("grid_size") = 1024, py::arg("params") = std::nullopt);

  m.def(
      "run_pca",
      [](const Eigen::MatrixXd& curves, const std::string& method) {
        const PCAResult r = RunPca(curves, ParseDimensionMethod(method));
        py::dict d;
        d["mean_curve"] = Eigen::VectorXd(r.mean_curve.transpose());
        d["components"] = r.components;
        d["eigenvalues"] = r.eigenvalues;
        d["estimated_k"] = r.estimated_k;
        return d;
      },
      py::arg("curves"), py::arg("method") = "laplace");
  m.def(
      "run_ica",
      [](const Eigen::MatrixXd& curves, const std::string& method) {
        const PCAResult pca = RunPca(curves, ParseDimensionMethod(method));
        const ICAResult r = RunIca(pca, curves);
        py::dict d;
        d["estimated_basis"] = r.estimated_basis.curves;
        d["tip_weights"] = r.tip_weights;
        d["unmixing"] = r.unmixing;
        d["mean_curve"] = Eigen::VectorXd(r.mean_curve.transpose());
        d["non_gaussianity"] = r.non_gaussianity;
        d["low_cumulant"] = r.low_cumulant;
        d["reconstruction_error"] = ReconstructionError(r, curves);
        return d;
      },
      py::arg("curves"), py::arg("method") = "laplace");
  m.def(
      "align_components",
      [](const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
        const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(truth.cols(), 0.0, 1.0);
        const AlignmentReport r = AlignComponents(BasisSet{estimated, grid}, BasisSet{truth, grid});
        py::dict d;
        d["permutation"] = r.permutation;
        d["signs"] = r.signs;
        d["scales"] = r.scales;
        d["correlations"] = r.correlations;
        return d;
      },
      py::arg("estimated"), py::arg("truth"));

  m.def(
      "gp_posterior",
      [](const PhyloTree& tree, const Eigen::VectorXd& tip_weights, const OUHyperParams& params,
         std::optional<std::vector<std::size_t>> nodes) {
        const std::vector<NodeId> queries = nodes ? ToIds(*nodes) : tree.all_nodes();
        const auto post = GpPosterior(tree, tip_weights, params, queries);
        const auto n = static_cast<Eigen::Index>(post.size());
        Eigen::VectorXd mean(n), total(n), inherited(n), specific(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto& p = post[static_cast<std::size_t>(i)];
          mean(i) = p.mean;
          total(i) = p.total_variance;
          inherited(i) = p.inherited_variance;
          specific(i) = p.specific_variance;
        }
        py::dict d;
        d["nodes"] = FromIds(queries);
        d["mean"] = mean;
        d["total_variance"] = total;
        d["inherited_variance"] = inherited;
        d["specific_variance"] = specific;
        return d;
      },
      py::arg("tree"), py::arg("tip_weights"), py::arg("params"), py::arg("nodes") = std::nullopt);

  m.def(
      "log_marginal_likelihood",
      [](const PhyloTree& tree, const Eigen::VectorXd& y, const OUHyperParams& p) { return LogMarginalLikelihood(tree, y, p); },
      py::arg("tree"), py::arg("tip_weights"), py::arg("params"));
  m.def(
      "profile_mle",
      [](const PhyloTree& tree, const Eigen::VectorXd& y, const std::string& free, const OUHyperParams& fixed,
         std::optional<std::pair<double, double>> bounds) {
        const FreeParam which = ParseFreeParam(free);
        return MleDict(ProfileMle(tree, y, which, fixed, bounds.value_or(DefaultBounds(tree, which))));
      },
      py::arg("tree"), py::arg("tip_weights"), py::arg("free_param"), py::arg("fixed"), py::arg("bounds") = std::nullopt);
  m.def(
      "ratio_mle",
      [](const PhyloTree& tree, const Eigen::VectorXd& y, double lambda_known, double ratio,
         std::optional<std::pair<double, double>> bounds) {
        auto result = MleDict(RatioMle(tree, y, lambda_known, ratio, bounds.value_or(DefaultBounds(tree, FreeParam::kSigmaF))));
        result["closed_form"] = RatioClosedFormSigmaF(tree, y, lambda_known, ratio);
        return result;
      },
      py::arg("tree"), py::arg("tip_weights"), py::arg("lambda_known"), py::arg("ratio"), py::arg("bounds") = std::nullopt);

  m.def(
      "run_command",
      [](const std::string& command, const std::string& out_dir, std::optional<std::string> in_dir, std::uint64_t seed,
         std::size_t tips, long grid_size, const std::string& basis, const std::string& dim_method,
         const std::string& free_param, std::optional<double> ratio, std::optional<std::size_t> component,
         std::optional<std::string> params) {
        cli::RunConfig config;
        config.command = command;
        config.out_dir = out_dir;
        config.in_dir = in_dir.value_or(out_dir);
        config.seed = seed;
        config.n_tips = tips;
        config.grid_size = grid_size;
        config.basis = cli::ParseBasisSource(basis);
        config.dim_method = ParseDimensionMethod(dim_method);
        config.free_param = ParseFreeParam(free_param);
        config.ratio = ratio;
        config.component = component;
        if (params) config.params = cli::ParseParamsArgument(*params);
        const auto result = cli::RunCommand(config);
        return py::make_tuple(result.files, result.summary.dump());
      },
      py::arg("command"), py::arg("out_dir"), py::arg("in_dir") = std::nullopt, py::arg("seed") = 0,
      py::arg("tips") = 128, py::arg("grid_size") = 1024, py::arg("basis") = "true", py::arg("dim_method") = "laplace",
      py::arg("free_param") = "sigma_f", py::arg("ratio") = std::nullopt, py::arg("component") = std::nullopt,
      py::arg("params") = std::nullopt);
}
