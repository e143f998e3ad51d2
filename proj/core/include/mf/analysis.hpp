#pragma once

#include <string>
#include <vector>

#include "mf/evaluate.hpp"

namespace mf {

// Rows of muscle activations in [0,1] with a task label per row.
struct ActivationDataset {
  int num_actuators = 0;
  std::vector<float> data;      // row-major, rows x num_actuators
  std::vector<int> task_index;  // one label per row
  std::string source_policy;

  size_t rows() const {
    return num_actuators > 0 ? data.size() / static_cast<size_t>(num_actuators)
                             : 0;
  }
  void append_episode(int task, const std::vector<float>& actions);
  ActivationDataset filter_task(int task) const;

  void save_csv(const std::string& path,
                const std::vector<std::string>& task_names) const;
  static ActivationDataset load_csv(const std::string& path,
                                    const std::vector<std::string>& task_names);
};

// Mean plus orthonormal components sorted by descending eigenvalue.
struct PCABasis {
  std::vector<double> mean;          // n
  std::vector<double> components;    // n x n, column k = k-th component
  std::vector<double> eigenvalues;   // descending, >= 0
  int dim = 0;
  bool rank_deficient = false;

  double component(int row, int col) const {
    return components[static_cast<size_t>(row) * dim + col];
  }
};

// Eigendecomposition of the sample covariance of the centered data.
// Sign convention: the largest-magnitude entry of each component is positive.
PCABasis fit_pca(const ActivationDataset& dataset);

// clip(mean + P_k P_k^T (a - mean), 0, 1)
std::vector<double> project_action(const std::vector<double>& action,
                                   const PCABasis& basis, int k);

// cumulative explained-variance fraction of the top-k components
double explained_variance(const PCABasis& basis, int k);

// Projected variance difference: how much of data_B's variance its own
// top-k subspace captures beyond what basis_A's top-k captures, as a
// fraction of data_B's total variance. Directional by definition.
double pvd(const PCABasis& basis_a, const ActivationDataset& data_b, int k);

// Mean principal angle (degrees) between the two top-k subspaces.
double pad(const PCABasis& basis_a, const PCABasis& basis_b, int k);

struct CsiPoint {
  int k = 0;
  double relative_performance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double explained_variance = 0.0;
};

// Re-runs the policy with actions projected on the top-k subspace for every
// k in 1..N_A and reports solved fraction relative to the unprojected run.
// 95% confidence intervals come from the per-episode solved fractions.
std::vector<CsiPoint> csi_curve(const TaskSuite& suite,
                                const TransformerPolicy<float>& policy,
                                const RunningStandardizer& frozen_stats,
                                const std::string& task_name,
                                const PCABasis& basis, int episodes = 100,
                                uint64_t seed = 0, int workers = 1);

std::string csi_csv(const std::vector<CsiPoint>& curve);

}  // namespace mf
