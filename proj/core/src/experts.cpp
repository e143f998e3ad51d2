#include "mf/experts.hpp"

#include <algorithm>
#include <cmath>

#include "mf/checkpoint.hpp"
#include "mf/rollout.hpp"

namespace mf {

namespace {

int find_channel(const std::vector<ChannelDef>& channels,
                 const std::string& name, bool required = true) {
  for (size_t i = 0; i < channels.size(); ++i)
    if (channels[i].name == name) return static_cast<int>(i);
  if (required) fail("expert: channel \"", name, "\" not found in task layout");
  return -1;
}

}  // namespace

std::vector<double> torque_to_activation(const Embodiment& emb,
                                         const std::vector<double>& torque,
                                         double co_contraction) {
  std::vector<double> u(static_cast<size_t>(emb.num_muscles()), 0.0);
  for (int m = 0; m < emb.num_muscles(); ++m) {
    const auto& p = emb.muscles[static_cast<size_t>(m)];
    double demand = 0.0;
    for (auto [j, r] : p.moment_arms) {
      double frac = torque[static_cast<size_t>(j)] / (r * p.f_max);
      if (frac > 0.0) demand += frac;  // only muscles pulling the right way
    }
    u[static_cast<size_t>(m)] =
        std::clamp(co_contraction + demand, 0.0, 1.0);
  }
  return u;
}

PdMuscleExpert::PdMuscleExpert(const TaskSuite& suite, int task_index,
                               ExpertGains gains)
    : suite_(&suite), task_index_(task_index), gains_(gains) {
  const auto& task = suite.tasks()[static_cast<size_t>(task_index)];
  check(task.objective != ObjectiveKind::relocate || true,
        "pd expert: any pose/point objective");
  const auto& emb = suite.embodiment_of(task);
  const auto& chans = suite.task_channels(task_index);
  for (const auto& j : emb.joints) {
    angle_idx_.push_back(find_channel(chans, j.name + ".angular_position"));
    vel_idx_.push_back(find_channel(chans, j.name + ".angular_velocity"));
  }
  if (task.objective == ObjectiveKind::joint_pose) {
    target_angle_idx_ = find_channel(chans, "target.angle");
  } else {
    tip_x_idx_ = find_channel(chans, "tip.x");
    tip_y_idx_ = find_channel(chans, "tip.y");
    if (task.objective == ObjectiveKind::reach_point) {
      target_x_idx_ = find_channel(chans, "target.x");
      target_y_idx_ = find_channel(chans, "target.y");
    }
  }
}

std::string PdMuscleExpert::describe() const {
  return "analytic:pd(kp=" + std::to_string(gains_.kp) +
         ",kd=" + std::to_string(gains_.kd) + ")";
}

std::vector<double> PdMuscleExpert::action_toward(
    const Observation& obs, const std::array<double, 2>& point) const {
  const auto& task = suite_->tasks()[static_cast<size_t>(task_index_)];
  const auto& emb = suite_->embodiment_of(task);
  int nj = emb.num_joints();
  std::vector<double> torque(static_cast<size_t>(nj), 0.0);
  std::vector<double> theta(static_cast<size_t>(nj));
  for (int j = 0; j < nj; ++j)
    theta[static_cast<size_t>(j)] =
        obs.values[static_cast<size_t>(angle_idx_[static_cast<size_t>(j)])];

  if (task.objective == ObjectiveKind::joint_pose) {
    double err = point[0] - theta[0];
    torque[0] = gains_.kp * err;
  } else {
    // task-space PD through the Jacobian transpose
    double tip_x = obs.values[static_cast<size_t>(tip_x_idx_)];
    double tip_y = obs.values[static_cast<size_t>(tip_y_idx_)];
    double fx = gains_.kp * (point[0] - tip_x);
    double fy = gains_.kp * (point[1] - tip_y);
    // jacobian from the observed joint angles; geometry is embodiment data
    double l1 = emb.link_lengths[0];
    double l2 = emb.link_lengths[1];
    double a1 = theta[0];
    double a2 = theta[0] + theta[1] - M_PI;
    double jxx = -l1 * std::sin(a1) - l2 * std::sin(a2);
    double jxe = -l2 * std::sin(a2);
    double jyx = l1 * std::cos(a1) + l2 * std::cos(a2);
    double jye = l2 * std::cos(a2);
    torque[0] = jxx * fx + jyx * fy;
    torque[1] = jxe * fx + jye * fy;
  }
  for (int j = 0; j < nj; ++j)
    torque[static_cast<size_t>(j)] -=
        gains_.kd *
        obs.values[static_cast<size_t>(vel_idx_[static_cast<size_t>(j)])];
  return torque_to_activation(emb, torque, gains_.co_contraction);
}

std::vector<double> PdMuscleExpert::action(const Observation& obs) {
  const auto& task = suite_->tasks()[static_cast<size_t>(task_index_)];
  if (task.objective == ObjectiveKind::joint_pose)
    return action_toward(
        obs, {obs.values[static_cast<size_t>(target_angle_idx_)], 0.0});
  return action_toward(obs,
                       {obs.values[static_cast<size_t>(target_x_idx_)],
                        obs.values[static_cast<size_t>(target_y_idx_)]});
}

WaypointExpert::WaypointExpert(const TaskSuite& suite, int task_index,
                               ExpertGains gains)
    : pd_(suite, task_index, gains) {
  const auto& task = suite.tasks()[static_cast<size_t>(task_index)];
  check(task.objective == ObjectiveKind::relocate,
        "waypoint expert requires the relocate objective");
  const auto& chans = suite.task_channels(task_index);
  obj_x_idx_ = find_channel(chans, "object.x");
  obj_y_idx_ = find_channel(chans, "object.y");
  goal_x_idx_ = find_channel(chans, "goal.x");
  goal_y_idx_ = find_channel(chans, "goal.y");
  err_x_idx_ = find_channel(chans, "object_error.x");
  err_y_idx_ = find_channel(chans, "object_error.y");
  contact_idx_ = find_channel(chans, "object.contact");
  tip_x_idx_ = find_channel(chans, "tip.x");
  tip_y_idx_ = find_channel(chans, "tip.y");
  goal_half_size_ = task.goal_half_size;
  grasp_radius_ = task.grasp_radius;
  num_muscles_ = suite.embodiment_of(task).num_muscles();
}

WaypointExpert::Phase WaypointExpert::observed_phase(
    const Observation& obs) const {
  bool grasped = obs.values[static_cast<size_t>(contact_idx_)] > 0.5;
  bool in_box =
      std::abs(obs.values[static_cast<size_t>(err_x_idx_)]) < goal_half_size_ &&
      std::abs(obs.values[static_cast<size_t>(err_y_idx_)]) < goal_half_size_;
  if (grasped) return Phase::carry;
  if (in_box) return Phase::release;  // delivered and released
  double dx = obs.values[static_cast<size_t>(tip_x_idx_)] -
              obs.values[static_cast<size_t>(obj_x_idx_)];
  double dy = obs.values[static_cast<size_t>(tip_y_idx_)] -
              obs.values[static_cast<size_t>(obj_y_idx_)];
  return std::hypot(dx, dy) < 1.5 * grasp_radius_ ? Phase::grasp
                                                  : Phase::approach;
}

std::vector<double> WaypointExpert::action(const Observation& obs) {
  Phase seen = observed_phase(obs);
  if (static_cast<int>(seen) > static_cast<int>(latched_)) latched_ = seen;
  switch (latched_) {
    case Phase::approach:
    case Phase::grasp:
      return pd_.action_toward(obs,
                               {obs.values[static_cast<size_t>(obj_x_idx_)],
                                obs.values[static_cast<size_t>(obj_y_idx_)]});
    case Phase::carry:
      return pd_.action_toward(obs,
                               {obs.values[static_cast<size_t>(goal_x_idx_)],
                                obs.values[static_cast<size_t>(goal_y_idx_)]});
    case Phase::release:
      // object delivered: settle on the co-contraction floor
      return std::vector<double>(static_cast<size_t>(num_muscles_), 0.02);
  }
  return {};
}

NoisyExpert::NoisyExpert(std::unique_ptr<Expert> inner, double std_dev,
                         uint64_t seed)
    : inner_(std::move(inner)), std_dev_(std_dev), seed_(seed), rng_(seed) {}

std::vector<double> NoisyExpert::action(const Observation& obs) {
  auto a = inner_->action(obs);
  for (auto& x : a) x = std::clamp(x + rng_.normal(0.0, std_dev_), 0.0, 1.0);
  return a;
}

std::unique_ptr<Expert> NoisyExpert::clone() const {
  return std::make_unique<NoisyExpert>(inner_->clone(), std_dev_, seed_);
}

std::unique_ptr<Expert> make_analytic_expert(const TaskSuite& suite,
                                             int task_index) {
  const auto& task = suite.tasks()[static_cast<size_t>(task_index)];
  // gains from a scripted grid search over seeded episodes
  ExpertGains gains;
  if (task.name == "ElbowPose") {
    gains.kp = 6.0;
    gains.kd = 0.7;
  } else if (task.name == "ReachNear") {
    gains.kp = 80.0;
    gains.kd = 0.9;
  } else if (task.name == "ReachFar") {
    gains.kp = 50.0;
    gains.kd = 1.1;
  } else if (task.name == "RelocateLite") {
    gains.kp = 50.0;
    gains.kd = 1.1;
  }
  if (task.objective == ObjectiveKind::relocate)
    return std::make_unique<WaypointExpert>(suite, task_index, gains);
  return std::make_unique<PdMuscleExpert>(suite, task_index, gains);
}

namespace {

// Deterministic policy-mean teacher. Keeps its own observation window fed by
// the student's visited states; standardization uses the checkpoint's frozen
// statistics.
class CheckpointExpert : public Expert {
 public:
  CheckpointExpert(std::shared_ptr<const CheckpointData> data,
                   const TaskSuite& suite, int task_index)
      : data_(std::move(data)),
        suite_(&suite),
        layout_(TaskIoLayout::make(suite, task_index)) {}

  void reset() override { fresh_ = true; }

  std::vector<double> action(const Observation& obs) override {
    int window = data_->policy->spec().window;
    if (fresh_) {
      window_.reset(obs, window);
      fresh_ = false;
    } else {
      window_.push(obs);
    }
    TokenBatch batch = make_token_batch(*suite_, {{&layout_, &window_}},
                                        data_->obs_stats, window);
    auto dists = data_->policy->action_distributions(batch);
    return std::vector<double>(dists[0].mean.begin(), dists[0].mean.end());
  }

  std::unique_ptr<Expert> clone() const override {
    auto c = std::make_unique<CheckpointExpert>(data_, *suite_,
                                                layout_.task_index);
    return c;
  }

  std::string describe() const override {
    return "checkpoint:" + data_->algo;
  }

 private:
  std::shared_ptr<const CheckpointData> data_;
  const TaskSuite* suite_;
  TaskIoLayout layout_;
  WindowState window_;
  bool fresh_ = true;
};

}  // namespace

std::unique_ptr<Expert> make_checkpoint_expert(const std::string& path,
                                               const TaskSuite& suite,
                                               int task_index) {
  auto data = std::make_shared<CheckpointData>(load_checkpoint(path));
  check(data->policy_kind == "transformer",
        "checkpoint expert: ", path, " does not hold a token policy");
  const auto& task = suite.tasks()[static_cast<size_t>(task_index)];
  bool listed = false;
  for (const auto& t : data->tasks) listed = listed || t == task.name;
  check(listed, "checkpoint expert: ", path, " was not trained on task ",
        task.name);
  check(data->vocab_words == suite.vocab().words() &&
            data->disjoint_vocabulary == suite.disjoint_vocabulary(),
        "checkpoint expert: vocabulary mismatch between ", path,
        " and the task suite");
  return std::make_unique<CheckpointExpert>(std::move(data), suite, task_index);
}

void ExpertRegistry::set_analytic(const std::string& task) {
  entries_[task] = Entry{true, ""};
}

void ExpertRegistry::set_checkpoint(const std::string& task,
                                    const std::string& path) {
  entries_[task] = Entry{false, path};
}

bool ExpertRegistry::has(const std::string& task) const {
  return entries_.count(task) > 0;
}

std::string ExpertRegistry::source(const std::string& task) const {
  auto it = entries_.find(task);
  if (it == entries_.end()) return "none";
  return it->second.analytic ? "analytic" : it->second.checkpoint_path;
}

std::unique_ptr<Expert> ExpertRegistry::make(const TaskSuite& suite,
                                             int task_index) const {
  const auto& name = suite.tasks()[static_cast<size_t>(task_index)].name;
  auto it = entries_.find(name);
  check(it != entries_.end(), "no expert registered for task ", name);
  std::unique_ptr<Expert> expert;
  if (it->second.analytic)
    expert = make_analytic_expert(suite, task_index);
  else
    expert = make_checkpoint_expert(it->second.checkpoint_path, suite,
                                    task_index);
  if (label_noise_ > 0.0)
    expert = std::make_unique<NoisyExpert>(std::move(expert), label_noise_,
                                           fnv1a64("expert-noise:" + name));
  return expert;
}

}  // namespace mf
