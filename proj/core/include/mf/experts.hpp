#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mf/sim.hpp"

namespace mf {

// Teacher policy queried on every visited state during imitation. Analytic
// experts are pure functions of the observation; checkpoint experts keep a
// private observation window and must be reset at episode boundaries. Each
// environment worker owns its own clone.
class Expert {
 public:
  virtual ~Expert() = default;
  virtual void reset() {}
  virtual std::vector<double> action(const Observation& obs) = 0;
  virtual std::unique_ptr<Expert> clone() const = 0;
  virtual std::string describe() const = 0;
};

struct ExpertGains {
  double kp = 8.0;   // pose: Nm/rad; reach: task-space N/m
  double kd = 1.0;   // Nm s/rad, applied on joint velocity
  double co_contraction = 0.02;
};

// Maps a desired joint torque vector to muscle activations: each muscle
// takes the fraction of its torque capacity demanded by the joints it
// spans, on top of a constant co-contraction floor.
std::vector<double> torque_to_activation(const Embodiment& emb,
                                         const std::vector<double>& torque,
                                         double co_contraction);

// PD controller for pose and reach objectives. Reach errors are mapped to
// joint torques through the arm Jacobian transpose.
class PdMuscleExpert : public Expert {
 public:
  PdMuscleExpert(const TaskSuite& suite, int task_index, ExpertGains gains);
  std::vector<double> action(const Observation& obs) override;
  std::unique_ptr<Expert> clone() const override {
    return std::make_unique<PdMuscleExpert>(*this);
  }
  std::string describe() const override;

  // PD toward an explicit planar point (used by the waypoint expert)
  std::vector<double> action_toward(const Observation& obs,
                                    const std::array<double, 2>& point) const;

 private:
  const TaskSuite* suite_;
  int task_index_;
  ExpertGains gains_;
  // channel indices resolved once against the task layout
  std::vector<int> angle_idx_, vel_idx_;
  int target_angle_idx_ = -1;
  int tip_x_idx_ = -1, tip_y_idx_ = -1;
  int target_x_idx_ = -1, target_y_idx_ = -1;
};

// approach -> grasp -> carry -> release phase machine for RelocateLite,
// feeding PD targets to the muscle-routing controller.
class WaypointExpert : public Expert {
 public:
  enum class Phase { approach = 0, grasp = 1, carry = 2, release = 3 };

  WaypointExpert(const TaskSuite& suite, int task_index, ExpertGains gains);
  std::vector<double> action(const Observation& obs) override;
  void reset() override { latched_ = Phase::approach; }
  std::unique_ptr<Expert> clone() const override {
    return std::make_unique<WaypointExpert>(*this);
  }
  std::string describe() const override { return "analytic:waypoint"; }
  Phase observed_phase(const Observation& obs) const;
  Phase current_phase() const { return latched_; }

 private:
  PdMuscleExpert pd_;
  Phase latched_ = Phase::approach;
  int num_muscles_ = 0;
  int tip_x_idx_ = -1, tip_y_idx_ = -1;
  double grasp_radius_ = 0.05;
  int obj_x_idx_ = -1, obj_y_idx_ = -1;
  int goal_x_idx_ = -1, goal_y_idx_ = -1;
  int err_x_idx_ = -1, err_y_idx_ = -1;
  int contact_idx_ = -1;
  double goal_half_size_ = 0.06;
};

// Optional label noise for robustness experiments (off by default).
class NoisyExpert : public Expert {
 public:
  NoisyExpert(std::unique_ptr<Expert> inner, double std_dev, uint64_t seed);
  void reset() override { inner_->reset(); }
  std::vector<double> action(const Observation& obs) override;
  std::unique_ptr<Expert> clone() const override;
  std::string describe() const override {
    return inner_->describe() + "+noise";
  }

 private:
  std::unique_ptr<Expert> inner_;
  double std_dev_;
  uint64_t seed_;
  Rng rng_;
};

// Deterministic policy-mean expert backed by a saved checkpoint; declared
// here, implemented next to the checkpoint loader.
std::unique_ptr<Expert> make_checkpoint_expert(const std::string& path,
                                               const TaskSuite& suite,
                                               int task_index);

// Default analytic expert for a task, with tuned gains.
std::unique_ptr<Expert> make_analytic_expert(const TaskSuite& suite,
                                             int task_index);

// task -> expert source, as declared in the run config.
class ExpertRegistry {
 public:
  void set_analytic(const std::string& task);
  void set_checkpoint(const std::string& task, const std::string& path);
  bool has(const std::string& task) const;
  std::string source(const std::string& task) const;
  // hard error when the task has no registered expert
  std::unique_ptr<Expert> make(const TaskSuite& suite, int task_index) const;
  void set_label_noise(double std_dev) { label_noise_ = std_dev; }

 private:
  struct Entry {
    bool analytic = true;
    std::string checkpoint_path;
  };
  std::map<std::string, Entry> entries_;
  double label_noise_ = 0.0;
};

}  // namespace mf
