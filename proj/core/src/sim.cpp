#include "mf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mf {

void Embodiment::validate() const {
  check(!joints.empty() && !muscles.empty(), "embodiment ", name,
        ": needs joints and muscles");
  // antagonism: every joint is pulled in both directions
  for (int j = 0; j < num_joints(); ++j) {
    bool pos = false, neg = false;
    for (const auto& m : muscles)
      for (auto [ji, r] : m.moment_arms)
        if (ji == j) (r > 0 ? pos : neg) = true;
    check(pos && neg, "embodiment ", name, ": joint ", joints[j].name,
          " lacks antagonist muscles");
  }
  for (const auto& m : muscles) {
    check(m.f_max > 0 && m.optimal_length > 0, "muscle ", m.name,
          ": F_max and l0 must be positive");
    check(m.tau_act < m.tau_deact, "muscle ", m.name,
          ": tau_act must be below tau_deact");
  }
}

double muscle_activation_step(double a, double u, double dt, double tau_act,
                              double tau_deact) {
  double tau = u > a ? tau_act : tau_deact;
  double next = a + dt * (u - a) / tau;
  return std::clamp(next, 0.0, 1.0);
}

double muscle_force(double a, double l, double v, const MuscleParams& p) {
  double rel = (l - p.optimal_length) / (0.5 * p.optimal_length);
  double f_l = std::max(0.0, 1.0 - rel * rel);
  double v_max = 10.0 * p.optimal_length;
  double f_v = std::clamp(1.0 - v / v_max, 0.0, 1.5);
  double active = a * p.f_max * f_l * f_v;
  double passive = p.passive_k * std::max(0.0, l - p.optimal_length);
  return active + passive;
}

namespace {

Embodiment make_mini_elbow() {
  Embodiment e;
  e.name = "MiniElbow";
  e.joints = {{"elbow", {"elbow"}, 0.05, 0.25, 0.0, 2.6, 1.3, 1.3}};
  MuscleParams flexor{"elbow_flexor", {"elbow", "flexor"}, 40.0,
                      {{0, 0.03}},    0.01,
                      0.04,           0.1,
                      60.0};
  MuscleParams extensor{"elbow_extensor", {"elbow", "extensor"}, 40.0,
                        {{0, -0.03}},     0.01,
                        0.04,             0.1,
                        60.0};
  e.muscles = {flexor, extensor};
  e.validate();
  return e;
}

Embodiment make_mini_arm() {
  Embodiment e;
  e.name = "MiniArm";
  e.joints = {{"shoulder", {"shoulder"}, 0.15, 0.35, -0.6, 2.2, 0.8, 0.8},
              {"elbow", {"elbow"}, 0.05, 0.2, 0.15, 2.6, 1.3, 1.3}};
  e.link_lengths = {0.3, 0.3};
  auto muscle = [](std::string name, std::vector<std::string> words,
                   double f_max,
                   std::vector<std::pair<int, double>> arms, double l0,
                   double kp) {
    MuscleParams m;
    m.name = std::move(name);
    m.words = std::move(words);
    m.f_max = f_max;
    m.moment_arms = std::move(arms);
    m.optimal_length = l0;
    m.passive_k = kp;
    return m;
  };
  e.muscles = {
      muscle("shoulder_flexor", {"shoulder", "flexor"}, 70, {{0, 0.04}}, 0.12,
             60),
      muscle("shoulder_extensor", {"shoulder", "extensor"}, 70, {{0, -0.04}},
             0.12, 60),
      muscle("elbow_flexor", {"elbow", "flexor"}, 45, {{1, 0.03}}, 0.1, 50),
      muscle("elbow_extensor", {"elbow", "extensor"}, 45, {{1, -0.03}}, 0.1,
             50),
      muscle("biarticular_flexor", {"biarticular", "flexor"}, 35,
             {{0, 0.025}, {1, 0.02}}, 0.14, 40),
      muscle("biarticular_extensor", {"biarticular", "extensor"}, 35,
             {{0, -0.025}, {1, -0.02}}, 0.14, 40),
  };
  e.validate();
  return e;
}

}  // namespace

Signature TaskSuite::make_signature(const std::vector<std::string>& words,
                                    SignatureKind kind,
                                    const std::string& task_name) {
  std::vector<std::string> all = words;
  if (disjoint_ && kind != SignatureKind::value)
    all.push_back("task:" + task_name);
  for (const auto& w : all) vocab_.register_word(w);
  return Signature::make(vocab_, all, kind);
}

void TaskSuite::build(bool disjoint) {
  disjoint_ = disjoint;
  // fixed registration order keeps word indices stable across runs
  for (const char* w :
       {"value", "muscle", "joint", "length", "velocity", "force",
        "activation", "angular", "position", "target", "error", "x", "y",
        "tip", "hand", "object", "contact", "elbow", "shoulder", "flexor",
        "extensor", "biarticular"})
    vocab_.register_word(w);

  embodiments_ = {make_mini_elbow(), make_mini_arm()};

  TaskSpec elbow_pose;
  elbow_pose.name = "ElbowPose";
  elbow_pose.embodiment = "MiniElbow";
  elbow_pose.objective = ObjectiveKind::joint_pose;
  elbow_pose.success_threshold = 0.15;  // rad
  elbow_pose.max_steps = 100;
  elbow_pose.w_task = 1.0;
  elbow_pose.w_solved = 1.0;
  elbow_pose.w_reg = 1.0;
  elbow_pose.target_radius = {0.35, 2.35};  // target angle range, rad

  TaskSpec reach_near;
  reach_near.name = "ReachNear";
  reach_near.embodiment = "MiniArm";
  reach_near.objective = ObjectiveKind::reach_point;
  reach_near.success_threshold = 0.045;  // m
  reach_near.max_steps = 100;
  reach_near.w_task = 1.0;
  reach_near.w_solved = 1.0;
  reach_near.w_reg = 1.0;
  reach_near.target_radius = {0.22, 0.38};
  reach_near.target_angle = {0.15, 1.35};

  TaskSpec reach_far = reach_near;
  reach_far.name = "ReachFar";
  reach_far.target_radius = {0.42, 0.55};
  reach_far.target_angle = {0.1, 1.2};

  TaskSpec relocate;
  relocate.name = "RelocateLite";
  relocate.embodiment = "MiniArm";
  relocate.objective = ObjectiveKind::relocate;
  relocate.success_threshold = 0.06;  // goal box half-size, m
  relocate.max_steps = 200;
  relocate.w_task = 10.0;   // object-to-goal shaping (largest reward scale)
  relocate.w_solved = 20.0;
  relocate.w_reg = 1.0;
  relocate.w_palm = 1.0;
  relocate.object_radius = {0.28, 0.44};
  relocate.object_angle = {0.55, 1.15};
  relocate.target_radius = {0.3, 0.48};
  relocate.target_angle = {-0.15, 0.35};
  relocate.object_mass = {0.05, 0.2};
  relocate.grasp_radius = 0.05;
  relocate.goal_half_size = 0.06;

  tasks_ = {elbow_pose, reach_near, reach_far, relocate};

  channels_per_task_.resize(tasks_.size());
  actuators_per_task_.resize(tasks_.size());
  for (size_t ti = 0; ti < tasks_.size(); ++ti) {
    const auto& task = tasks_[ti];
    const auto& emb = embodiment_of(task);
    auto& chans = channels_per_task_[ti];
    auto& acts = actuators_per_task_[ti];
    auto sensor = [&](const std::string& name,
                      std::vector<std::string> words) {
      Signature sig =
          make_signature(words, SignatureKind::sensor, task.name);
      chans.push_back({name, signatures_.intern(sig)});
    };
    for (const auto& m : emb.muscles) {
      for (const char* q : {"length", "velocity", "force", "activation"}) {
        auto words = m.words;
        words.push_back("muscle");
        words.push_back(q);
        sensor(m.name + "." + q, words);
      }
    }
    for (const auto& j : emb.joints) {
      for (const char* q : {"position", "velocity"}) {
        auto words = j.words;
        words.insert(words.end(), {"joint", "angular", q});
        sensor(j.name + ".angular_" + q, words);
      }
    }
    switch (task.objective) {
      case ObjectiveKind::joint_pose:
        sensor("target.angle",
               {"elbow", "joint", "target", "angular", "position"});
        sensor("error.angle",
               {"elbow", "joint", "error", "angular", "position"});
        break;
      case ObjectiveKind::relocate:
      case ObjectiveKind::reach_point:
        for (const char* axis : {"x", "y"})
          sensor(std::string("tip.") + axis,
                 {"hand", "tip", axis, "position"});
        if (task.objective == ObjectiveKind::reach_point) {
          for (const char* axis : {"x", "y"})
            sensor(std::string("target.") + axis,
                   {"hand", "tip", "target", axis, "position"});
          for (const char* axis : {"x", "y"})
            sensor(std::string("error.") + axis,
                   {"hand", "tip", "error", axis, "position"});
        } else {
          for (const char* axis : {"x", "y"})
            sensor(std::string("object.") + axis,
                   {"object", axis, "position"});
          for (const char* axis : {"x", "y"})
            sensor(std::string("goal.") + axis,
                   {"object", "target", axis, "position"});
          for (const char* axis : {"x", "y"})
            sensor(std::string("object_error.") + axis,
                   {"object", "error", axis, "position"});
          sensor("object.contact", {"object", "contact"});
        }
        break;
    }
    for (const auto& m : emb.muscles) {
      auto words = m.words;
      words.push_back("muscle");
      Signature sig =
          make_signature(words, SignatureKind::actuator, task.name);
      acts.push_back({m.name, signatures_.intern(sig)});
    }
  }
}

TaskSuite TaskSuite::make(bool disjoint_vocabulary) {
  TaskSuite suite;
  suite.build(disjoint_vocabulary);
  return suite;
}

int TaskSuite::task_index(const std::string& name) const {
  for (size_t i = 0; i < tasks_.size(); ++i)
    if (tasks_[i].name == name) return static_cast<int>(i);
  std::string catalog;
  for (const auto& t : tasks_) catalog += " " + t.name;
  fail("unknown task \"", name, "\"; catalog:", catalog);
}

const Embodiment& TaskSuite::embodiment_of(const TaskSpec& task) const {
  for (const auto& e : embodiments_)
    if (e.name == task.embodiment) return e;
  fail("task ", task.name, " references unknown embodiment ", task.embodiment);
}

const std::vector<ChannelDef>& TaskSuite::task_channels(int task_index) const {
  check(task_index >= 0 &&
            task_index < static_cast<int>(channels_per_task_.size()),
        "task_channels: bad index ", task_index);
  return channels_per_task_[static_cast<size_t>(task_index)];
}

const std::vector<ChannelDef>& TaskSuite::task_actuators(int task_index) const {
  check(task_index >= 0 &&
            task_index < static_cast<int>(actuators_per_task_.size()),
        "task_actuators: bad index ", task_index);
  return actuators_per_task_[static_cast<size_t>(task_index)];
}

std::string TaskSuite::catalog_text() const {
  std::ostringstream os;
  os << "# Task catalog\n";
  os << "# Planar horizontal workspace (no gravity torque). Muscle model:\n";
  os << "# F = a*F_max*f_l(l)*f_v(v) + k_p*max(0, l-l0), "
        "f_l = max(0, 1-((l-l0)/(0.5*l0))^2),\n";
  os << "# f_v = clip(1 - v/(10*l0), 0, 1.5). Activation: da/dt = (u-a)/tau, "
        "tau_act 0.01 s,\n";
  os << "# tau_deact 0.04 s, integrated at dt/4 inside each physics "
        "substep.\n";
  os << "# Muscle kinematics: l = l0 - sum_j r_j*(theta_j - ref_j), v = "
        "-sum_j r_j*dtheta_j.\n\n";
  for (const auto& e : embodiments_) {
    os << "embodiment " << e.name << "\n";
    os << "  dt " << e.dt << "  frame_skip " << e.frame_skip << "\n";
    for (const auto& j : e.joints)
      os << "  joint " << j.name << "  inertia " << j.inertia << "  damping "
         << j.damping << "  limits [" << j.limit_lo << ", " << j.limit_hi
         << "]  ref " << j.ref_angle << "  init " << j.init_angle << "\n";
    for (const auto& m : e.muscles) {
      os << "  muscle " << m.name << "  F_max " << m.f_max << "  l0 "
         << m.optimal_length << "  k_p " << m.passive_k << "  arms";
      for (auto [j, r] : m.moment_arms)
        os << " (" << e.joints[static_cast<size_t>(j)].name << ", " << r
           << ")";
      os << "\n";
    }
    if (e.has_end_effector()) {
      os << "  links";
      for (double l : e.link_lengths) os << " " << l;
      os << "\n";
    }
  }
  os << "\n";
  for (const auto& t : tasks_) {
    os << "task " << t.name << "  embodiment " << t.embodiment << "\n";
    os << "  max_steps " << t.max_steps << "  success_threshold "
       << t.success_threshold << "\n";
    os << "  reward  task " << t.w_task << "  palm " << t.w_palm
       << "  solved " << t.w_solved << "  action_reg " << t.w_reg << "\n";
    switch (t.objective) {
      case ObjectiveKind::joint_pose:
        os << "  objective joint_pose  target_angle [" << t.target_radius[0]
           << ", " << t.target_radius[1] << "] rad\n";
        break;
      case ObjectiveKind::reach_point:
        os << "  objective reach_point  target polar r [" << t.target_radius[0]
           << ", " << t.target_radius[1] << "] angle [" << t.target_angle[0]
           << ", " << t.target_angle[1] << "]\n";
        break;
      case ObjectiveKind::relocate:
        os << "  objective relocate  object polar r [" << t.object_radius[0]
           << ", " << t.object_radius[1] << "] angle [" << t.object_angle[0]
           << ", " << t.object_angle[1] << "]\n";
        os << "  goal polar r [" << t.target_radius[0] << ", "
           << t.target_radius[1] << "] angle [" << t.target_angle[0] << ", "
           << t.target_angle[1] << "]  goal_half_size " << t.goal_half_size
           << "\n";
        os << "  grasp_radius " << t.grasp_radius << "  object_mass ["
           << t.object_mass[0] << ", " << t.object_mass[1] << "]\n";
        break;
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Env

Env::Env(const TaskSuite& suite, int task_index)
    : suite_(&suite),
      task_(&suite.tasks()[static_cast<size_t>(task_index)]),
      embodiment_(&suite.embodiment_of(*task_)) {
  channels_ = suite.task_channels(task_index);
  actuators_ = suite.task_actuators(task_index);
  theta_.assign(static_cast<size_t>(embodiment_->num_joints()), 0.0);
  theta_dot_ = theta_;
  activation_.assign(static_cast<size_t>(embodiment_->num_muscles()), 0.0);
}

double Env::muscle_length(int m) const {
  const auto& p = embodiment_->muscles[static_cast<size_t>(m)];
  double l = p.optimal_length;
  for (auto [j, r] : p.moment_arms)
    l -= r * (theta_[static_cast<size_t>(j)] -
              embodiment_->joints[static_cast<size_t>(j)].ref_angle);
  return l;
}

double Env::muscle_velocity(int m) const {
  const auto& p = embodiment_->muscles[static_cast<size_t>(m)];
  double v = 0.0;
  for (auto [j, r] : p.moment_arms) v -= r * theta_dot_[static_cast<size_t>(j)];
  return v;
}

std::array<double, 2> Env::tip_position(const std::vector<double>& theta) const {
  check(embodiment_->has_end_effector(), "tip_position: ", embodiment_->name,
        " has no end effector");
  double l1 = embodiment_->link_lengths[0];
  double l2 = embodiment_->link_lengths[1];
  double a1 = theta[0];
  double a2 = theta[0] + theta[1] - M_PI;  // interior elbow angle convention
  return {l1 * std::cos(a1) + l2 * std::cos(a2),
          l1 * std::sin(a1) + l2 * std::sin(a2)};
}

std::vector<double> Env::tip_jacobian(const std::vector<double>& theta) const {
  double l1 = embodiment_->link_lengths[0];
  double l2 = embodiment_->link_lengths[1];
  double a1 = theta[0];
  double a2 = theta[0] + theta[1] - M_PI;
  // rows: x, y; cols: shoulder, elbow
  return {-l1 * std::sin(a1) - l2 * std::sin(a2), -l2 * std::sin(a2),
          l1 * std::cos(a1) + l2 * std::cos(a2), l2 * std::cos(a2)};
}

std::array<double, 2> Env::end_effector() const { return tip_position(theta_); }

Observation Env::reset(uint64_t seed) {
  Rng rng(seed);
  steps_ = 0;
  for (int j = 0; j < embodiment_->num_joints(); ++j) {
    theta_[static_cast<size_t>(j)] =
        embodiment_->joints[static_cast<size_t>(j)].init_angle;
    theta_dot_[static_cast<size_t>(j)] = 0.0;
  }
  std::fill(activation_.begin(), activation_.end(), 0.0);
  attached_ = false;
  dropped_ = false;
  object_mass_ = 0.0;
  switch (task_->objective) {
    case ObjectiveKind::joint_pose:
      target_angle_ =
          rng.uniform(task_->target_radius[0], task_->target_radius[1]);
      break;
    case ObjectiveKind::reach_point: {
      double r = rng.uniform(task_->target_radius[0], task_->target_radius[1]);
      double a = rng.uniform(task_->target_angle[0], task_->target_angle[1]);
      target_point_ = {r * std::cos(a), r * std::sin(a)};
      break;
    }
    case ObjectiveKind::relocate: {
      double r = rng.uniform(task_->object_radius[0], task_->object_radius[1]);
      double a = rng.uniform(task_->object_angle[0], task_->object_angle[1]);
      object_pos_ = {r * std::cos(a), r * std::sin(a)};
      r = rng.uniform(task_->target_radius[0], task_->target_radius[1]);
      a = rng.uniform(task_->target_angle[0], task_->target_angle[1]);
      goal_center_ = {r * std::cos(a), r * std::sin(a)};
      object_mass_ = rng.uniform(task_->object_mass[0], task_->object_mass[1]);
      break;
    }
  }
  return observe();
}

bool Env::success_now() const {
  switch (task_->objective) {
    case ObjectiveKind::joint_pose:
      return std::abs(theta_[0] - target_angle_) < task_->success_threshold;
    case ObjectiveKind::reach_point: {
      auto tip = end_effector();
      double dx = tip[0] - target_point_[0];
      double dy = tip[1] - target_point_[1];
      return std::sqrt(dx * dx + dy * dy) < task_->success_threshold;
    }
    case ObjectiveKind::relocate:
      return std::abs(object_pos_[0] - goal_center_[0]) <
                 task_->goal_half_size &&
             std::abs(object_pos_[1] - goal_center_[1]) < task_->goal_half_size;
  }
  return false;
}

double Env::task_term() const {
  switch (task_->objective) {
    case ObjectiveKind::joint_pose:
      return -std::abs(theta_[0] - target_angle_);
    case ObjectiveKind::reach_point: {
      auto tip = end_effector();
      return -std::hypot(tip[0] - target_point_[0], tip[1] - target_point_[1]);
    }
    case ObjectiveKind::relocate:
      return -std::hypot(object_pos_[0] - goal_center_[0],
                         object_pos_[1] - goal_center_[1]);
  }
  return 0.0;
}

Observation Env::observe() const {
  Observation obs;
  obs.values.reserve(channels_.size());
  int nm = embodiment_->num_muscles();
  for (int m = 0; m < nm; ++m) {
    double l = muscle_length(m);
    double v = muscle_velocity(m);
    obs.values.push_back(l);
    obs.values.push_back(v);
    obs.values.push_back(muscle_force(activation_[static_cast<size_t>(m)], l, v,
                                      embodiment_->muscles[static_cast<size_t>(m)]));
    obs.values.push_back(activation_[static_cast<size_t>(m)]);
  }
  for (int j = 0; j < embodiment_->num_joints(); ++j) {
    obs.values.push_back(theta_[static_cast<size_t>(j)]);
    obs.values.push_back(theta_dot_[static_cast<size_t>(j)]);
  }
  switch (task_->objective) {
    case ObjectiveKind::joint_pose:
      obs.values.push_back(target_angle_);
      obs.values.push_back(target_angle_ - theta_[0]);
      break;
    case ObjectiveKind::reach_point: {
      auto tip = end_effector();
      obs.values.insert(obs.values.end(), {tip[0], tip[1], target_point_[0],
                                           target_point_[1],
                                           target_point_[0] - tip[0],
                                           target_point_[1] - tip[1]});
      break;
    }
    case ObjectiveKind::relocate: {
      auto tip = end_effector();
      obs.values.insert(obs.values.end(),
                        {tip[0], tip[1], object_pos_[0], object_pos_[1],
                         goal_center_[0], goal_center_[1],
                         goal_center_[0] - object_pos_[0],
                         goal_center_[1] - object_pos_[1],
                         attached_ ? 1.0 : 0.0});
      break;
    }
  }
  check(obs.values.size() == channels_.size(),
        "observation layout drifted from the channel list");
  return obs;
}

StepResult Env::step(const std::vector<double>& action) {
  check(static_cast<int>(action.size()) == action_dim(), "env ", task_->name,
        ": action dim ", action.size(), " != ", action_dim());
  StepResult result;
  std::vector<double> u(action);
  for (double& x : u) {
    if (x < 0.0 || x > 1.0) {
      result.action_clipped = true;
      x = std::clamp(x, 0.0, 1.0);
    }
  }

  int nj = embodiment_->num_joints();
  int nm = embodiment_->num_muscles();
  double dt = embodiment_->dt;
  for (int sub = 0; sub < embodiment_->frame_skip; ++sub) {
    // activation dynamics, sub-stepped to avoid single-step saturation
    for (int m = 0; m < nm; ++m) {
      const auto& p = embodiment_->muscles[static_cast<size_t>(m)];
      double a = activation_[static_cast<size_t>(m)];
      for (int k = 0; k < 4; ++k)
        a = muscle_activation_step(a, u[static_cast<size_t>(m)], dt / 4.0,
                                   p.tau_act, p.tau_deact);
      activation_[static_cast<size_t>(m)] = a;
    }
    // muscle torques
    std::vector<double> torque(static_cast<size_t>(nj), 0.0);
    for (int m = 0; m < nm; ++m) {
      const auto& p = embodiment_->muscles[static_cast<size_t>(m)];
      double f = muscle_force(activation_[static_cast<size_t>(m)],
                              muscle_length(m), muscle_velocity(m), p);
      for (auto [j, r] : p.moment_arms) torque[static_cast<size_t>(j)] += f * r;
    }
    // attached point mass loads the joints through the Jacobian
    std::vector<double> inertia(static_cast<size_t>(nj));
    for (int j = 0; j < nj; ++j)
      inertia[static_cast<size_t>(j)] =
          embodiment_->joints[static_cast<size_t>(j)].inertia;
    if (attached_ && object_mass_ > 0.0) {
      auto jac = tip_jacobian(theta_);
      for (int j = 0; j < nj; ++j) {
        double cx = jac[static_cast<size_t>(j)];
        double cy = jac[static_cast<size_t>(nj + j)];
        inertia[static_cast<size_t>(j)] += object_mass_ * (cx * cx + cy * cy);
      }
    }
    // semi-implicit Euler with joint limits
    for (int j = 0; j < nj; ++j) {
      const auto& jp = embodiment_->joints[static_cast<size_t>(j)];
      double acc = (torque[static_cast<size_t>(j)] -
                    jp.damping * theta_dot_[static_cast<size_t>(j)]) /
                   inertia[static_cast<size_t>(j)];
      theta_dot_[static_cast<size_t>(j)] += dt * acc;
      theta_[static_cast<size_t>(j)] += dt * theta_dot_[static_cast<size_t>(j)];
      if (theta_[static_cast<size_t>(j)] < jp.limit_lo) {
        theta_[static_cast<size_t>(j)] = jp.limit_lo;
        theta_dot_[static_cast<size_t>(j)] = 0.0;
      } else if (theta_[static_cast<size_t>(j)] > jp.limit_hi) {
        theta_[static_cast<size_t>(j)] = jp.limit_hi;
        theta_dot_[static_cast<size_t>(j)] = 0.0;
      }
    }
    // object attachment, carry and delivery. Once inside the goal box the
    // object is released and settles there (frictionless, no gravity).
    if (task_->objective == ObjectiveKind::relocate) {
      auto tip = end_effector();
      if (!attached_ && !dropped_) {
        double d = std::hypot(tip[0] - object_pos_[0], tip[1] - object_pos_[1]);
        if (d < task_->grasp_radius) attached_ = true;
      }
      if (attached_) {
        object_pos_ = tip;
        if (std::abs(object_pos_[0] - goal_center_[0]) < task_->goal_half_size &&
            std::abs(object_pos_[1] - goal_center_[1]) < task_->goal_half_size) {
          attached_ = false;
          dropped_ = true;
        }
      }
    }
  }

  steps_ += 1;
  result.success = success_now();
  result.task_term = task_term();
  double reg = 0.0;
  for (double x : u) reg += x * x;
  reg /= static_cast<double>(nm);
  double palm = 0.0;
  if (task_->objective == ObjectiveKind::relocate) {
    auto tip = end_effector();
    palm = -std::hypot(tip[0] - object_pos_[0], tip[1] - object_pos_[1]);
  }
  result.reward = task_->w_task * result.task_term + task_->w_palm * palm +
                  task_->w_solved * (result.success ? 1.0 : 0.0) -
                  task_->w_reg * reg;
  result.truncated = steps_ >= task_->max_steps;
  result.terminated = false;
  result.obs = observe();
  return result;
}

}  // namespace mf
