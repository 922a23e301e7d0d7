#include "phylofunc/ou_kernel.hpp"

#include <array>
#include <cmath>

#include "phylofunc/csv.hpp"
#include "phylofunc/error.hpp"

namespace phylofunc {

void OUHyperParams::Validate() const {
  if (!std::isfinite(sigma_f) || sigma_f < 0.0) throw InvalidInput("sigma_f must be >= 0");
  if (!std::isfinite(sigma_n) || sigma_n < 0.0) throw InvalidInput("sigma_n must be >= 0");
  if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda))) throw InvalidInput("lambda must be > 0");
  if (sigma_f > 0.0 && !lambda) throw InvalidInput("lambda is required when sigma_f > 0");
}

nlohmann::json ToJson(const OUHyperParams& params) {
  nlohmann::json j;
  j["sigma_f"] = params.sigma_f;
  j["lambda"] = params.lambda ? nlohmann::json(*params.lambda) : nlohmann::json(nullptr);
  j["sigma_n"] = params.sigma_n;
  return j;
}

OUHyperParams OUHyperParamsFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("hyperparameters must be a JSON object");
  OUHyperParams params;
  try {
    params.sigma_f = j.at("sigma_f").get<double>();
    params.sigma_n = j.at("sigma_n").get<double>();
    if (j.contains("lambda") && !j.at("lambda").is_null()) params.lambda = j.at("lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad hyperparameter object: ") + e.what());
  }
  params.Validate();
  return params;
}

double OUCov(const OUHyperParams& params, double distance, bool same_node) {
  if (!(distance >= 0.0)) throw InvalidInput("distance must be non-negative");
  if (same_node && distance != 0.0) throw InvalidInput("a node is at distance 0 from itself");
  double value = 0.0;
  if (params.sigma_f > 0.0) {
    if (!params.lambda) throw InvalidInput("lambda is required when sigma_f > 0");
    value = params.sigma_f * params.sigma_f * std::exp(-distance / *params.lambda);
  }
  if (same_node) value += params.sigma_n * params.sigma_n;
  return value;
}

CovarianceMatrix BuildCovMatrix(const OUHyperParams& params, const DistanceMatrix& distances,
                                bool include_self_delta) {
  params.Validate();
  CovarianceMatrix out{distances.node_order, CrossCovariance(params, distances.entries)};
  if (include_self_delta) out.entries.diagonal().array() += params.sigma_n * params.sigma_n;
  return out;
}

Eigen::MatrixXd CrossCovariance(const OUHyperParams& params, const Eigen::MatrixXd& distances) {
  if ((distances.array() < 0.0).any() || distances.hasNaN()) {
    throw InvalidInput("distance must be non-negative");
  }
  if (params.sigma_f == 0.0) return Eigen::MatrixXd::Zero(distances.rows(), distances.cols());
  if (!params.lambda) throw InvalidInput("lambda is required when sigma_f > 0");
  return (params.sigma_f * params.sigma_f) * (-distances.array() / *params.lambda).exp().matrix();
}

PsdReport ValidatePsd(const Eigen::MatrixXd& matrix, double tolerance) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) throw InvalidInput("matrix must be square");
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidInput("matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalFailure("eigenvalue computation failed");
  PsdReport report;
  report.min_eigenvalue = solver.eigenvalues().minCoeff();
  report.max_eigenvalue = solver.eigenvalues().maxCoeff();
  report.is_psd = report.min_eigenvalue >= -tolerance;
  return report;
}

JitteredCholesky::JitteredCholesky(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols()) throw InvalidInput("covariance must be square");
  llt_.compute(covariance);
  if (llt_.info() == Eigen::Success) return;

  const double mean_diag = covariance.diagonal().mean();
  if (mean_diag > 0.0 && std::isfinite(mean_diag)) {
    for (const double scale : std::array{1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
      Eigen::MatrixXd jittered = covariance;
      jittered.diagonal().array() += scale * mean_diag;
      llt_.compute(jittered);
      if (llt_.info() == Eigen::Success) {
        jitter_ = scale * mean_diag;
        return;
      }
    }
  }
  throw NumericalFailure("covariance matrix is not positive definite even after jitter");
}

double JitteredCholesky::log_determinant() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

std::string CovarianceToCsv(const PhyloTree& tree, const CovarianceMatrix& matrix) {
  return DistanceMatrixToCsv(tree, DistanceMatrix{matrix.node_order, matrix.entries});
}

CovarianceMatrix CovarianceFromCsv(const PhyloTree& tree, const std::string& text) {
  const auto rows = csv::Parse(text);
  if (rows.empty()) throw InvalidInput("empty covariance file");
  const std::size_t n = rows.front().size() - 1;
  if (rows.size() != n + 1) throw InvalidInput("covariance file is not square");
  CovarianceMatrix out;
  out.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    auto id = tree.find(rows.front()[j + 1]);
    if (!id) throw InvalidInput("unknown node '" + rows.front()[j + 1] + "'");
    out.node_order.push_back(*id);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    if (row.size() != n + 1) throw InvalidInput("ragged covariance row");
    if (row[0] != rows.front()[i + 1]) throw InvalidInput("row and column node order differ");
    for (std::size_t j = 0; j < n; ++j) {
      out.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = csv::ParseDouble(row[j + 1]);
    }
  }
  return out;
}

}  // namespace phylofunc
