#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mf/rng.hpp"
#include "mf/vocab.hpp"

namespace mf {

// Simplified Hill-type muscle. Force-length is an inverted parabola around
// the optimal length, force-velocity a clipped linear ramp, plus a linear
// passive term beyond the optimal length. First-order activation dynamics
// with separate activation/deactivation time constants.
struct MuscleParams {
  std::string name;
  std::vector<std::string> words;  // anatomy words for signatures
  double f_max = 1.0;              // max isometric force, N
  // signed moment arm per actuated joint (joint index, metres)
  std::vector<std::pair<int, double>> moment_arms;
  double tau_act = 0.01;    // s
  double tau_deact = 0.04;  // s
  double optimal_length = 0.1;  // l0, m
  double passive_k = 50.0;      // N/m beyond l0
};

struct JointParams {
  std::string name;
  std::vector<std::string> words;
  double inertia = 0.05;   // kg m^2
  double damping = 0.2;    // N m s
  double limit_lo = 0.0;
  double limit_hi = 2.6;
  double ref_angle = 1.3;  // angle at which every muscle sits at l0
  double init_angle = 1.3;
};

struct Embodiment {
  std::string name;
  std::vector<JointParams> joints;
  std::vector<MuscleParams> muscles;
  double dt = 0.01;    // physics substep, s
  int frame_skip = 5;  // substeps per control step
  std::vector<double> link_lengths;  // planar chain; empty if no end effector

  bool has_end_effector() const { return !link_lengths.empty(); }
  int num_joints() const { return static_cast<int>(joints.size()); }
  int num_muscles() const { return static_cast<int>(muscles.size()); }
  void validate() const;
};

// a' = a + dt * (u - a) / tau, tau chosen by the sign of (u - a), clipped.
double muscle_activation_step(double a, double u, double dt, double tau_act,
                              double tau_deact);

// F = a * F_max * f_l(l) * f_v(v) + k_p * max(0, l - l0)
// f_l(l) = max(0, 1 - ((l - l0) / (0.5 l0))^2)
// f_v(v) = clip(1 - v / v_max, 0, 1.5), v_max = 10 * l0 per second
double muscle_force(double a, double l, double v, const MuscleParams& p);

enum class ObjectiveKind { joint_pose, reach_point, relocate };

struct TaskSpec {
  std::string name;
  std::string embodiment;
  ObjectiveKind objective = ObjectiveKind::joint_pose;
  double success_threshold = 0.1;
  int max_steps = 100;
  // reward = w_task * task_term + w_palm * palm_term
  //        + w_solved * [success] - w_reg * |action|^2 / n
  double w_task = 1.0;
  double w_solved = 1.0;
  double w_reg = 1.0;
  double w_palm = 0.0;  // relocate only: end-effector-to-object shaping

  // randomization ranges (task-dependent meaning, documented in the catalog)
  std::array<double, 2> target_radius{{0.0, 0.0}};
  std::array<double, 2> target_angle{{0.0, 0.0}};
  std::array<double, 2> object_radius{{0.0, 0.0}};
  std::array<double, 2> object_angle{{0.0, 0.0}};
  std::array<double, 2> object_mass{{0.05, 0.2}};
  double grasp_radius = 0.05;
  double goal_half_size = 0.06;
};

struct ChannelDef {
  std::string name;   // human-readable, e.g. "elbow_flexor.length"
  int signature_id = -1;
};

// Flat scalar observation aligned with the env's channel list.
struct Observation {
  std::vector<double> values;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool terminated = false;  // unused by the toy suite; kept for GAE contract
  bool truncated = false;
  bool success = false;
  bool action_clipped = false;
  double task_term = 0.0;
};

// Vocabulary, interning pool and channel layouts shared by every env of a
// suite. Signatures collide across tasks exactly on shared anatomy; the
// disjoint mode appends a task-qualifier word to every signature instead.
class TaskSuite;

class Env {
 public:
  Env(const TaskSuite& suite, int task_index);

  Observation reset(uint64_t seed);
  StepResult step(const std::vector<double>& action);

  int action_dim() const { return embodiment_->num_muscles(); }
  const std::vector<ChannelDef>& channels() const { return channels_; }
  const std::vector<ChannelDef>& actuator_channels() const {
    return actuators_;
  }
  const TaskSpec& task() const { return *task_; }
  const Embodiment& embodiment() const { return *embodiment_; }
  int steps_taken() const { return steps_; }

  // state accessors used by analytic experts and tests
  const std::vector<double>& joint_angles() const { return theta_; }
  const std::vector<double>& joint_velocities() const { return theta_dot_; }
  const std::vector<double>& activations() const { return activation_; }
  std::array<double, 2> end_effector() const;
  std::array<double, 2> target_point() const { return target_point_; }
  double target_angle() const { return target_angle_; }
  std::array<double, 2> object_position() const { return object_pos_; }
  std::array<double, 2> goal_center() const { return goal_center_; }
  bool object_attached() const { return attached_; }
  bool object_delivered() const { return dropped_; }
  double muscle_length(int m) const;
  double muscle_velocity(int m) const;

  // kinematics helpers (pure functions of the passed angles)
  std::array<double, 2> tip_position(const std::vector<double>& theta) const;
  // d tip / d theta, 2 x num_joints, row-major
  std::vector<double> tip_jacobian(const std::vector<double>& theta) const;

 private:
  void build_channels();
  Observation observe() const;
  bool success_now() const;
  double task_term() const;

  const TaskSuite* suite_;
  const TaskSpec* task_;
  const Embodiment* embodiment_;
  std::vector<ChannelDef> channels_;
  std::vector<ChannelDef> actuators_;

  std::vector<double> theta_, theta_dot_, activation_;
  std::array<double, 2> target_point_{{0, 0}};
  double target_angle_ = 0.0;
  std::array<double, 2> object_pos_{{0, 0}};
  std::array<double, 2> goal_center_{{0, 0}};
  double object_mass_ = 0.0;
  bool attached_ = false;
  bool dropped_ = false;  // delivered into the goal box and released
  int steps_ = 0;
};

class TaskSuite {
 public:
  // The catalog: MiniElbow/ElbowPose, MiniArm/ReachNear, MiniArm/ReachFar,
  // MiniArm/RelocateLite.
  static TaskSuite make(bool disjoint_vocabulary = false);

  const Vocabulary& vocab() const { return vocab_; }
  Vocabulary& vocab() { return vocab_; }
  const SignatureSet& signatures() const { return signatures_; }
  SignatureSet& signatures() { return signatures_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const std::vector<Embodiment>& embodiments() const { return embodiments_; }
  bool disjoint_vocabulary() const { return disjoint_; }

  int task_index(const std::string& name) const;  // hard error with catalog
  const TaskSpec& task(const std::string& name) const {
    return tasks_[static_cast<size_t>(task_index(name))];
  }
  const Embodiment& embodiment_of(const TaskSpec& task) const;
  std::unique_ptr<Env> make_env(const std::string& task_name) const {
    return std::make_unique<Env>(*this, task_index(task_name));
  }
  std::unique_ptr<Env> make_env(int task_index) const {
    return std::make_unique<Env>(*this, task_index);
  }

  // sensor channel layout and actuator signature list per task
  const std::vector<ChannelDef>& task_channels(int task_index) const;
  const std::vector<ChannelDef>& task_actuators(int task_index) const;

  // documented structured description of tasks and randomization ranges
  std::string catalog_text() const;

 private:
  friend class Env;
  void build(bool disjoint);
  Signature make_signature(const std::vector<std::string>& words,
                           SignatureKind kind, const std::string& task_name);

  Vocabulary vocab_;
  SignatureSet signatures_;
  std::vector<Embodiment> embodiments_;
  std::vector<TaskSpec> tasks_;
  std::vector<std::vector<ChannelDef>> channels_per_task_;
  std::vector<std::vector<ChannelDef>> actuators_per_task_;
  bool disjoint_ = false;
};

}  // namespace mf
