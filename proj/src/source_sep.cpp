#include "phylofunc/source_sep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace phylofunc {

DimensionMethod ParseDimensionMethod(const std::string& name) {
  if (name == "laplace") return DimensionMethod::kLaplace;
  if (name == "gap") return DimensionMethod::kGap;
  throw InvalidInput("dimension method must be 'laplace' or 'gap', got '" + name + "'");
}

std::string ToString(DimensionMethod method) {
  return method == DimensionMethod::kLaplace ? "laplace" : "gap";
}

// ---------------------------------------------------------------------------
// PCA

double LaplaceLogEvidence(const Eigen::VectorXd& spectrum, Eigen::Index k, Eigen::Index dimension,
                          Eigen::Index n_samples) {
  const Eigen::Index d = dimension;
  if (k < 1 || k >= d || spectrum.size() < d) throw InvalidInput("rank out of range for evidence");
  const double n = static_cast<double>(n_samples);
  const double floor = spectrum(0) * 1e-300 + std::numeric_limits<double>::min();

  double pu = -static_cast<double>(k) * std::log(2.0);
  for (Eigen::Index i = 1; i <= k; ++i) {
    const double half = static_cast<double>(d - i + 1) / 2.0;
    pu += std::lgamma(half) - std::log(std::numbers::pi) * half;
  }
  double pl = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) pl += std::log(std::max(spectrum(i), floor));
  pl *= -n / 2.0;

  const double v = std::max(spectrum.segment(k, d - k).sum() / static_cast<double>(d - k), floor);
  const double pv = -std::log(v) * n * static_cast<double>(d - k) / 2.0;

  const double params = static_cast<double>(d * k) - static_cast<double>(k * (k + 1)) / 2.0;
  const double pp = std::log(2.0 * std::numbers::pi) * (params + static_cast<double>(k)) / 2.0;

  double pa = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double lj = j < k ? spectrum(j) : v;
      const double arg = (spectrum(i) - spectrum(j)) * (1.0 / lj - 1.0 / spectrum(i));
      if (!(arg > 0.0)) return -std::numeric_limits<double>::infinity();
      pa += std::log(arg) + std::log(n);
    }
  }
  return pu + pl + pv + pp - pa / 2.0 - static_cast<double>(k) * std::log(n) / 2.0;
}

PCAResult RunPca(const Eigen::MatrixXd& curves, DimensionMethod method) {
  const Eigen::Index n = curves.rows();
  const Eigen::Index m = curves.cols();
  if (n < 3) throw InvalidInput("PCA needs at least 3 curves");
  if (m < 2) throw InvalidInput("PCA needs curves with at least 2 grid points");
  if (!curves.allFinite()) throw InvalidInput("curves contain non-finite values");

  PCAResult out;
  out.method = method;
  out.mean_curve = curves.colwise().mean();
  const Eigen::MatrixXd centred = curves.rowwise() - out.mean_curve;
  if (centred.squaredNorm() == 0.0) throw InvalidInput("curves are constant (zero total variance)");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& singular = svd.singularValues();
  const Eigen::Index usable = std::min(n - 1, m);
  const double threshold =
      singular(0) * static_cast<double>(std::max(n, m)) * std::numeric_limits<double>::epsilon();
  Eigen::Index rank = 0;
  while (rank < usable && singular(rank) > threshold) ++rank;

  out.eigenvalues = singular.head(usable).array().square() / static_cast<double>(n - 1);
  out.numerical_rank = rank;
  out.components = svd.matrixV().leftCols(rank).transpose();
  out.scores = svd.matrixU().leftCols(rank) * singular.head(rank).asDiagonal();
  // Fix the SVD sign ambiguity: largest-magnitude loading is positive.
  for (Eigen::Index i = 0; i < rank; ++i) {
    Eigen::Index at = 0;
    out.components.row(i).cwiseAbs().maxCoeff(&at);
    if (out.components(i, at) < 0.0) {
      out.components.row(i) *= -1.0;
      out.scores.col(i) *= -1.0;
    }
  }

  // Eigenvalues below the selection threshold are noise; flatten them to one
  // floor so logs stay finite and the tail looks isotropic.
  Eigen::Index selectable = 0;
  while (selectable < rank && out.eigenvalues(selectable) > kSelectionThreshold * out.eigenvalues(0)) ++selectable;
  const double eigen_floor = threshold * threshold / static_cast<double>(n - 1);
  Eigen::VectorXd spectrum = out.eigenvalues.cwiseMax(eigen_floor);
  for (Eigen::Index i = selectable; i < usable; ++i) spectrum(i) = eigen_floor;

  const Eigen::Index max_k = std::min(selectable, usable - 1);
  if (max_k <= 1) {
    out.estimated_k = 1;
    return out;
  }
  if (method == DimensionMethod::kLaplace) {
    double best = -std::numeric_limits<double>::infinity();
    out.estimated_k = 1;
    for (Eigen::Index k = 1; k <= max_k; ++k) {
      const double evidence = LaplaceLogEvidence(spectrum, k, usable, n);
      if (evidence > best) {
        best = evidence;
        out.estimated_k = k;
      }
    }
  } else {
    double best_gap = -std::numeric_limits<double>::infinity();
    out.estimated_k = 1;
    for (Eigen::Index k = 1; k <= max_k; ++k) {
      const double gap = std::log(spectrum(k - 1)) - std::log(spectrum(k));
      if (gap > best_gap) {
        best_gap = gap;
        out.estimated_k = k;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cumulant ICA

namespace {

struct PairMoments {
  double m30 = 0, m21 = 0, m12 = 0, m03 = 0;
  double m40 = 0, m31 = 0, m22 = 0, m13 = 0, m04 = 0;
};

PairMoments Moments(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  PairMoments mo;
  const Eigen::Index n = x.size();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double a = x(t), b = y(t);
    const double a2 = a * a, b2 = b * b;
    mo.m30 += a2 * a;
    mo.m21 += a2 * b;
    mo.m12 += a * b2;
    mo.m03 += b2 * b;
    mo.m40 += a2 * a2;
    mo.m31 += a2 * a * b;
    mo.m22 += a2 * b2;
    mo.m13 += a * b2 * b;
    mo.m04 += b2 * b2;
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double* v : {&mo.m30, &mo.m21, &mo.m12, &mo.m03, &mo.m40, &mo.m31, &mo.m22, &mo.m13, &mo.m04}) *v *= inv;
  return mo;
}

// Third and fourth cumulants of w1*x + w2*y for unit (w1, w2) on whitened data.
double Kappa3(const PairMoments& mo, double w1, double w2) {
  return w1 * w1 * w1 * mo.m30 + 3 * w1 * w1 * w2 * mo.m21 + 3 * w1 * w2 * w2 * mo.m12 + w2 * w2 * w2 * mo.m03;
}

double Kappa4(const PairMoments& mo, double w1, double w2) {
  const double w1s = w1 * w1, w2s = w2 * w2;
  return w1s * w1s * mo.m40 + 4 * w1s * w1 * w2 * mo.m31 + 6 * w1s * w2s * mo.m22 +
         4 * w1 * w2s * w2 * mo.m13 + w2s * w2s * mo.m04 - 3.0;
}

double PairContrast(const PairMoments& mo, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double k3a = Kappa3(mo, c, s), k3b = Kappa3(mo, -s, c);
  const double k4a = Kappa4(mo, c, s), k4b = Kappa4(mo, -s, c);
  return (k3a * k3a + k3b * k3b) / 6.0 + (k4a * k4a + k4b * k4b) / 24.0;
}

double ColumnContrast(const Eigen::VectorXd& y) {
  const double n = static_cast<double>(y.size());
  const double k3 = y.array().cube().sum() / n;
  const double k4 = y.array().square().square().sum() / n - 3.0;
  return k3 * k3 / 6.0 + k4 * k4 / 24.0;
}

// The pair contrast is invariant under quarter turns and has degree 8 in
// (cos, sin), so it is exactly a0 + a4 cos 4t + b4 sin 4t + a8 cos 8t + b8 sin 8t.
// Eight samples over one period recover the coefficients; the maximiser of the
// trigonometric polynomial is then polished with Newton's method.
double OptimalPairAngle(const PairMoments& mo) {
  constexpr int kSamples = 8;
  double a4 = 0, b4 = 0, a8 = 0, b8 = 0;
  for (int j = 0; j < kSamples; ++j) {
    const double angle = j * std::numbers::pi / 16.0;
    const double value = PairContrast(mo, angle);
    const double theta = 4.0 * angle;
    a4 += value * std::cos(theta);
    b4 += value * std::sin(theta);
    a8 += value * std::cos(2 * theta);
    b8 += value * std::sin(2 * theta);
  }
  const double scale = 2.0 / kSamples;
  a4 *= scale, b4 *= scale, a8 *= scale, b8 *= scale;

  const auto g = [&](double t) { return a4 * std::cos(t) + b4 * std::sin(t) + a8 * std::cos(2 * t) + b8 * std::sin(2 * t); };
  const auto dg = [&](double t) {
    return -a4 * std::sin(t) + b4 * std::cos(t) - 2 * a8 * std::sin(2 * t) + 2 * b8 * std::cos(2 * t);
  };
  const auto d2g = [&](double t) {
    return -a4 * std::cos(t) - b4 * std::sin(t) - 4 * a8 * std::cos(2 * t) - 4 * b8 * std::sin(2 * t);
  };

  constexpr int kGrid = 64;
  double best_t = 0.0;
  double best_g = g(0.0);
  for (int j = 1; j < kGrid; ++j) {
    const double t = -std::numbers::pi + 2.0 * std::numbers::pi * j / kGrid;
    if (const double value = g(t); value > best_g) {
      best_g = value;
      best_t = t;
    }
  }
  double t = best_t;
  for (int iter = 0; iter < 50; ++iter) {
    const double curvature = d2g(t);
    if (!(curvature < 0.0)) break;
    const double step = dg(t) / curvature;
    const double next = t - step;
    if (g(next) < g(t)) break;
    t = next;
    if (std::abs(step) < 1e-15) break;
  }
  if (!(g(t) > g(0.0))) t = 0.0;
  t = std::remainder(t, 2.0 * std::numbers::pi);
  return t / 4.0;
}

double TotalContrast(const Eigen::MatrixXd& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.cols(); ++i) total += ColumnContrast(y.col(i));
  return total;
}

}  // namespace

RotationResult CumulantJacobiRotation(const Eigen::MatrixXd& whitened, const CumulantIcaOptions& options) {
  const Eigen::Index k = whitened.cols();
  RotationResult result;
  result.rotation = Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd y = whitened;
  bool converged = k < 2;
  while (!converged && result.sweeps < options.max_sweeps) {
    ++result.sweeps;
    double max_angle = 0.0;
    for (Eigen::Index p = 0; p + 1 < k; ++p) {
      for (Eigen::Index q = p + 1; q < k; ++q) {
        const double angle = OptimalPairAngle(Moments(y.col(p), y.col(q)));
        max_angle = std::max(max_angle, std::abs(angle));
        if (angle == 0.0) continue;
        const double c = std::cos(angle), s = std::sin(angle);
        const Eigen::VectorXd yp = y.col(p), yq = y.col(q);
        y.col(p) = c * yp + s * yq;
        y.col(q) = -s * yp + c * yq;
        const Eigen::VectorXd rp = result.rotation.col(p), rq = result.rotation.col(q);
        result.rotation.col(p) = c * rp + s * rq;
        result.rotation.col(q) = -s * rp + c * rq;
      }
    }
    result.objective_trace.push_back(TotalContrast(y));
    converged = max_angle < options.angle_tolerance;
  }
  for (Eigen::Index i = 0; i < k; ++i) result.component_contrast.push_back(ColumnContrast(y.col(i)));
  if (!converged) {
    throw IcaConvergenceError("cumulant ICA did not converge within " + std::to_string(options.max_sweeps) +
                                  " sweeps (last contrast " +
                                  std::to_string(result.objective_trace.empty() ? 0.0 : result.objective_trace.back()) +
                                  ")",
                              std::move(result));
  }
  return result;
}

ICAResult RunIca(const PCAResult& pca, const Eigen::MatrixXd& curves, const CumulantIcaOptions& options) {
  const Eigen::Index k = pca.estimated_k;
  const Eigen::Index n = pca.scores.rows();
  if (k < 1 || k > pca.numerical_rank) throw InvalidInput("estimated dimension out of range");
  if (n <= k) throw InvalidInput("ICA needs more curves than components");
  if (curves.rows() != n || curves.cols() != pca.components.cols()) {
    throw InvalidInput("curves do not match the PCA input");
  }
  const double nd = static_cast<double>(n);

  // Whitened scores: z^T z / n = I.
  const Eigen::VectorXd sd = (pca.eigenvalues.head(k) * (nd - 1.0) / nd).cwiseSqrt();
  const Eigen::MatrixXd whitened = pca.scores.leftCols(k) * sd.cwiseInverse().asDiagonal();

  RotationResult rotation = CumulantJacobiRotation(whitened, options);
  Eigen::MatrixXd sources = whitened * rotation.rotation;
  Eigen::MatrixXd basis = rotation.rotation.transpose() * sd.asDiagonal() * pca.components.topRows(k);
  Eigen::MatrixXd unmixing = sd.cwiseInverse().asDiagonal() * rotation.rotation;

  ICAResult out;
  out.mean_curve = pca.mean_curve;
  out.objective_trace = std::move(rotation.objective_trace);
  out.sweeps = rotation.sweeps;

  // Gauge: unit-norm rows, positive at the largest magnitude; weights absorb
  // the scale. Components are ordered by decreasing weight variance.
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::Index at = 0;
    basis.row(i).cwiseAbs().maxCoeff(&at);
    const double gauge = std::copysign(basis.row(i).norm(), basis(i, at));
    basis.row(i) /= gauge;
    sources.col(i) *= gauge;
    unmixing.col(i) *= gauge;
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd variance = sources.colwise().squaredNorm().transpose();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return variance(a) > variance(b); });

  out.estimated_basis.grid = Eigen::VectorXd::LinSpaced(basis.cols(), 0.0, 1.0);
  out.estimated_basis.curves.resize(k, basis.cols());
  out.tip_weights.resize(n, k);
  out.unmixing.resize(k, k);
  std::size_t clearly_non_gaussian = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index from = order[static_cast<std::size_t>(i)];
    out.estimated_basis.curves.row(i) = basis.row(from);
    out.tip_weights.col(i) = sources.col(from);
    out.unmixing.col(i) = unmixing.col(from);
    const double ng = nd * rotation.component_contrast[static_cast<std::size_t>(from)] / 2.0;
    out.non_gaussianity.push_back(ng);
    if (ng >= kNonGaussianityThreshold) ++clearly_non_gaussian;
  }
  out.low_cumulant = k >= 2 && static_cast<Eigen::Index>(clearly_non_gaussian) < k - 1;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.unmixing);
  const double condition = svd.singularValues()(0) / svd.singularValues()(k - 1);
  if (!(condition < 1e8)) throw NumericalFailure("unmixing transform is ill-conditioned");
  return out;
}

double ReconstructionError(const ICAResult& ica, const Eigen::MatrixXd& curves) {
  const Eigen::MatrixXd rebuilt = (ica.tip_weights * ica.estimated_basis.curves).rowwise() + ica.mean_curve;
  return (rebuilt - curves).norm() / curves.norm();
}

// ---------------------------------------------------------------------------
// Alignment

namespace {

double Pearson(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const Eigen::RowVectorXd ca = a.array() - a.mean();
  const Eigen::RowVectorXd cb = b.array() - b.mean();
  const double denom = ca.norm() * cb.norm();
  if (denom == 0.0) return 0.0;
  return std::clamp(ca.dot(cb) / denom, -1.0, 1.0);
}

}  // namespace

AlignmentReport AlignComponents(const BasisSet& estimated, const BasisSet& truth) {
  const Eigen::Index k = estimated.k();
  if (truth.k() != k) throw InvalidInput("estimated and true bases differ in size");
  if (truth.m() != estimated.m()) throw InvalidInput("estimated and true bases differ in grid length");

  Eigen::MatrixXd corr(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) corr(i, j) = Pearson(estimated.curves.row(i), truth.curves.row(j));
  }

  std::vector<Eigen::Index> best(static_cast<std::size_t>(k));
  std::iota(best.begin(), best.end(), 0);
  if (k <= 8) {
    std::vector<Eigen::Index> perm = best;
    double best_score = -1.0;
    do {
      double score = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) score += std::abs(corr(i, perm[static_cast<std::size_t>(i)]));
      if (score > best_score) {
        best_score = score;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<bool> row_used(static_cast<std::size_t>(k)), col_used(static_cast<std::size_t>(k));
    for (Eigen::Index step = 0; step < k; ++step) {
      double top = -1.0;
      Eigen::Index bi = 0, bj = 0;
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          if (row_used[i] || col_used[j] || std::abs(corr(i, j)) <= top) continue;
          top = std::abs(corr(i, j));
          bi = i;
          bj = j;
        }
      }
      row_used[bi] = col_used[bj] = true;
      best[static_cast<std::size_t>(bi)] = bj;
    }
  }

  AlignmentReport report;
  report.permutation = best;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j = best[static_cast<std::size_t>(i)];
    const double c = corr(i, j);
    report.correlations.push_back(c);
    report.signs.push_back(c < 0.0 ? -1 : 1);
    const double tt = truth.curves.row(j).squaredNorm();
    report.scales.push_back(tt > 0.0 ? std::abs(estimated.curves.row(i).dot(truth.curves.row(j))) / tt : 0.0);
  }
  return report;
}

nlohmann::json IcaDiagnostics(const PCAResult& pca, const ICAResult& ica, double reconstruction_error) {
  nlohmann::json j;
  j["estimated_k"] = pca.estimated_k;
  j["numerical_rank"] = pca.numerical_rank;
  j["dim_method"] = ToString(pca.method);
  j["eigenvalues"] = std::vector<double>(pca.eigenvalues.data(), pca.eigenvalues.data() + pca.eigenvalues.size());
  j["cumulant_objective_trace"] = ica.objective_trace;
  j["non_gaussianity"] = ica.non_gaussianity;
  j["low_cumulant"] = ica.low_cumulant;
  j["sweeps"] = ica.sweeps;
  j["reconstruction_error"] = reconstruction_error;
  return j;
}

}  // namespace phylofunc
