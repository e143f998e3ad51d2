#include "mf/analysis.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mf {

void ActivationDataset::append_episode(int task,
                                       const std::vector<float>& actions) {
  check(num_actuators > 0, "ActivationDataset: set num_actuators first");
  check(actions.size() % static_cast<size_t>(num_actuators) == 0,
        "ActivationDataset: ragged action row");
  size_t rows = actions.size() / static_cast<size_t>(num_actuators);
  data.insert(data.end(), actions.begin(), actions.end());
  for (size_t r = 0; r < rows; ++r) task_index.push_back(task);
}

ActivationDataset ActivationDataset::filter_task(int task) const {
  ActivationDataset out;
  out.num_actuators = num_actuators;
  out.source_policy = source_policy;
  for (size_t r = 0; r < rows(); ++r) {
    if (task_index[r] != task) continue;
    out.task_index.push_back(task);
    for (int c = 0; c < num_actuators; ++c)
      out.data.push_back(data[r * static_cast<size_t>(num_actuators) + c]);
  }
  return out;
}

void ActivationDataset::save_csv(
    const std::string& path, const std::vector<std::string>& task_names) const {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << "task";
  for (int c = 0; c < num_actuators; ++c) out << ",a" << c;
  out << "\n";
  out.precision(8);
  for (size_t r = 0; r < rows(); ++r) {
    out << task_names[static_cast<size_t>(task_index[r])];
    for (int c = 0; c < num_actuators; ++c)
      out << ',' << data[r * static_cast<size_t>(num_actuators) + c];
    out << "\n";
  }
}

ActivationDataset ActivationDataset::load_csv(
    const std::string& path, const std::vector<std::string>& task_names) {
  std::ifstream in(path);
  check(in.good(), "cannot open ", path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "empty activation log ", path);
  ActivationDataset out;
  out.num_actuators =
      static_cast<int>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string task;
    std::getline(ss, task, ',');
    int ti = -1;
    for (size_t i = 0; i < task_names.size(); ++i)
      if (task_names[i] == task) ti = static_cast<int>(i);
    check(ti >= 0, "unknown task in activation log: ", task);
    out.task_index.push_back(ti);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      out.data.push_back(std::stof(cell));
      cols += 1;
    }
    check(cols == out.num_actuators, "ragged activation log row in ", path);
  }
  return out;
}

PCABasis fit_pca(const ActivationDataset& dataset) {
  int n = dataset.num_actuators;
  size_t t = dataset.rows();
  check(t > static_cast<size_t>(n), "fit_pca: need more rows (", t,
        ") than actuators (", n, ")");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t), n);
  for (size_t r = 0; r < t; ++r)
    for (int c = 0; c < n; ++c)
      x(static_cast<Eigen::Index>(r), c) =
          dataset.data[r * static_cast<size_t>(n) + c];
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered /
                        static_cast<double>(t - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  check(solver.info() == Eigen::Success, "fit_pca: eigendecomposition failed");

  PCABasis basis;
  basis.dim = n;
  basis.mean.assign(mean.data(), mean.data() + n);
  basis.components.assign(static_cast<size_t>(n) * n, 0.0);
  basis.eigenvalues.assign(static_cast<size_t>(n), 0.0);
  // Eigen sorts ascending; emit descending with a deterministic sign
  for (int k = 0; k < n; ++k) {
    int src = n - 1 - k;
    double ev = solver.eigenvalues()(src);
    if (ev < 0 && ev > -1e-12) ev = 0.0;  // clamp tiny negative roundoff
    if (ev <= 0.0) basis.rank_deficient = true;
    basis.eigenvalues[static_cast<size_t>(k)] = std::max(0.0, ev);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    int arg = 0;
    for (int i = 1; i < n; ++i)
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    if (v(arg) < 0) v = -v;
    for (int i = 0; i < n; ++i)
      basis.components[static_cast<size_t>(i) * n + k] = v(i);
  }
  return basis;
}

std::vector<double> project_action(const std::vector<double>& action,
                                   const PCABasis& basis, int k) {
  int n = basis.dim;
  check(static_cast<int>(action.size()) == n,
        "project_action: dimension mismatch");
  check(k >= 1 && k <= n, "project_action: k = ", k, " outside [1, ", n, "]");
  std::vector<double> centered(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    centered[static_cast<size_t>(i)] = action[static_cast<size_t>(i)] -
                                       basis.mean[static_cast<size_t>(i)];
  std::vector<double> coeff(static_cast<size_t>(k), 0.0);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < n; ++i)
      coeff[static_cast<size_t>(c)] += basis.component(i, c) *
                                       centered[static_cast<size_t>(i)];
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = basis.mean[static_cast<size_t>(i)];
    for (int c = 0; c < k; ++c)
      v += basis.component(i, c) * coeff[static_cast<size_t>(c)];
    out[static_cast<size_t>(i)] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double explained_variance(const PCABasis& basis, int k) {
  check(k >= 1 && k <= basis.dim, "explained_variance: bad k");
  double total = 0.0, top = 0.0;
  for (int i = 0; i < basis.dim; ++i) {
    total += basis.eigenvalues[static_cast<size_t>(i)];
    if (i < k) top += basis.eigenvalues[static_cast<size_t>(i)];
  }
  return total > 0.0 ? top / total : 0.0;
}

double pvd(const PCABasis& basis_a, const ActivationDataset& data_b, int k) {
  int n = basis_a.dim;
  check(data_b.num_actuators == n, "pvd: dimension mismatch");
  PCABasis basis_b = fit_pca(data_b);

  size_t t = data_b.rows();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t), n);
  for (size_t r = 0; r < t; ++r)
    for (int c = 0; c < n; ++c)
      x(static_cast<Eigen::Index>(r), c) =
          data_b.data[r * static_cast<size_t>(n) + c];
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(t - 1);

  auto captured = [&](const PCABasis& basis) {
    Eigen::MatrixXd p(n, k);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c) p(i, c) = basis.component(i, c);
    return (p.transpose() * cov * p).trace();
  };
  double total = cov.trace();
  check(total > 0.0, "pvd: degenerate dataset with zero variance");
  return (captured(basis_b) - captured(basis_a)) / total;
}

double pad(const PCABasis& basis_a, const PCABasis& basis_b, int k) {
  int n = basis_a.dim;
  check(basis_b.dim == n, "pad: dimension mismatch");
  check(k >= 1 && k <= n, "pad: bad k");
  Eigen::MatrixXd pa(n, k), pb(n, k);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      pa(i, c) = basis_a.component(i, c);
      pb(i, c) = basis_b.component(i, c);
    }
  Eigen::MatrixXd m = pa.transpose() * pb;
  // singular values are transpose-invariant; pick a canonical orientation so
  // pad(a, b, k) and pad(b, a, k) run the identical decomposition
  Eigen::MatrixXd mt = m.transpose();
  for (int i = 0; i < k * k; ++i) {
    double x = m.data()[i], y = mt.data()[i];
    if (x == y) continue;
    if (y < x) m = mt;
    break;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    double s = std::clamp(svd.singularValues()(i), -1.0, 1.0);
    // acos is ill-conditioned at 1; values within roundoff of 1 mean the
    // directions coincide
    sum += s >= 1.0 - 1e-12 ? 0.0 : std::acos(s);
  }
  return sum / k * 180.0 / M_PI;
}

std::vector<CsiPoint> csi_curve(const TaskSuite& suite,
                                const TransformerPolicy<float>& policy,
                                const RunningStandardizer& frozen_stats,
                                const std::string& task_name,
                                const PCABasis& basis, int episodes,
                                uint64_t seed, int workers) {
  int ti = suite.task_index(task_name);
  int n_act = suite.embodiment_of(suite.tasks()[static_cast<size_t>(ti)])
                  .num_muscles();
  check(basis.dim == n_act, "csi_curve: basis dimension ", basis.dim,
        " does not match the task's ", n_act, " actuators");

  EvalOptions base;
  base.episodes = episodes;
  base.seed = seed;
  base.workers = workers;
  auto reference = evaluate_policy(suite, policy, frozen_stats, task_name, base);
  double ref = std::max(reference.solved_fraction, 1e-9);

  std::vector<CsiPoint> curve;
  for (int k = 1; k <= n_act; ++k) {
    EvalOptions opt = base;
    opt.action_transform = [&basis, k](const std::vector<double>& a) {
      return project_action(a, basis, k);
    };
    auto report = evaluate_policy(suite, policy, frozen_stats, task_name, opt);
    CsiPoint point;
    point.k = k;
    point.relative_performance = report.solved_fraction / ref;
    double se = report.solved_se / ref;
    point.ci_low = point.relative_performance - 1.96 * se;
    point.ci_high = point.relative_performance + 1.96 * se;
    point.explained_variance = explained_variance(basis, k);
    curve.push_back(point);
  }
  return curve;
}

std::string csi_csv(const std::vector<CsiPoint>& curve) {
  std::ostringstream os;
  os << "k,relative_performance,ci_low,ci_high,explained_variance\n";
  os.precision(8);
  for (const auto& p : curve)
    os << p.k << ',' << p.relative_performance << ',' << p.ci_low << ','
       << p.ci_high << ',' << p.explained_variance << "\n";
  return os.str();
}

}  // namespace mf
