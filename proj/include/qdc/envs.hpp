#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qdc/rng.hpp"
#include "qdc/trajectory.hpp"

namespace qdc {

// Scripted data-collection policies. segment_a covers start -> waypoint and
// then loiters; segment_b covers waypoint -> goal; stitch_mix is a 50/50
// episode mixture of the two. Neither segment alone solves the task from
// the start state, which is what makes the stitching test meaningful.
enum class PolicyKind { random, segment_a, segment_b, noisy_expert, stitch_mix };

struct BehaviorPolicySpec {
  PolicyKind kind = PolicyKind::random;
  double noise = 0.0;  // probability of a uniform random action per step
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool terminal = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::vector<double> reset() = 0;
  virtual StepResult step(const std::vector<double>& action) = 0;
  virtual bool done() const = 0;
  virtual bool succeeded() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual std::string name() const = 0;
  // Exact optimal undiscounted return from the start state.
  virtual double optimal_return() const = 0;
  virtual std::vector<Trajectory> generate_dataset(
      const BehaviorPolicySpec& spec, int episodes, Rng& rng) const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

enum class RewardMode { sparse, dense };

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// Deterministic gridworld. States are cell centers normalized to [-1,1]^2,
// actions are real 2-vectors snapped to the dominant cardinal direction
// ((0,0) means stay). Walls block movement (the agent stays put).
class GridMaze : public Env {
 public:
  GridMaze(int width, int height, std::vector<Cell> walls, Cell start,
           Cell goal, RewardMode reward_mode, int horizon,
           std::string name = "maze");

  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  bool done() const override { return done_; }
  bool succeeded() const override { return reached_goal_; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  int horizon() const override { return horizon_; }
  std::string name() const override { return name_; }
  double optimal_return() const override;
  std::vector<Trajectory> generate_dataset(const BehaviorPolicySpec& spec,
                                           int episodes,
                                           Rng& rng) const override;
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<GridMaze>(*this);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Cell start() const { return start_; }
  Cell goal() const { return goal_; }
  RewardMode reward_mode() const { return reward_mode_; }
  bool is_wall(Cell c) const;
  bool in_bounds(Cell c) const;
  Cell position() const { return pos_; }

  // Mid-cell of the shortest start->goal path; anchor for the stitching
  // segments.
  Cell waypoint() const;

  std::vector<double> encode(Cell c) const;
  // BFS distances from `from` to every reachable cell (-1 if unreachable).
  std::vector<int> distances(Cell from) const;
  int shortest_distance(Cell from, Cell to) const;

  void reset_to(Cell c);

 private:
  int width_, height_;
  std::vector<uint8_t> wall_;
  Cell start_, goal_;
  RewardMode reward_mode_;
  int horizon_;
  std::string name_;

  Cell pos_;
  int steps_ = 0;
  bool done_ = true;
  bool reached_goal_ = false;

  int idx(Cell c) const { return c.y * width_ + c.x; }
  double reward_at(Cell c) const;
  Cell bfs_step(Cell from, const std::vector<int>& dist_to_target) const;
  std::vector<double> scripted_action(Cell from, Cell to) const;
};

// Deterministic 1-D chain: states 0..n-1, start at 0, reward 1 for entering
// the right terminus (terminal). Action is a real scalar, >= 0 moves right.
class ChainMDP : public Env {
 public:
  ChainMDP(int n_states, int horizon);

  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  bool done() const override { return done_; }
  bool succeeded() const override { return reached_end_; }
  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int horizon() const override { return horizon_; }
  std::string name() const override {
    return "chain" + std::to_string(n_states_);
  }
  double optimal_return() const override;
  std::vector<Trajectory> generate_dataset(const BehaviorPolicySpec& spec,
                                           int episodes,
                                           Rng& rng) const override;
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<ChainMDP>(*this);
  }

  int n_states() const { return n_states_; }
  std::vector<double> encode(int s) const;
  void reset_to(int s);
  int position() const { return pos_; }

 private:
  int n_states_, horizon_;
  int pos_ = 0;
  int steps_ = 0;
  bool done_ = true;
  bool reached_end_ = false;
};

// 100 * (raw - random) / (optimal - random); 100 matches the expert.
double normalized_score(double raw_return, double optimal_return,
                        double random_policy_return);

// Mean return of a uniform-random policy; the zero anchor for scoring.
double random_policy_return(const Env& env, int episodes, uint64_t seed);

// Built-in names ("maze5x5-open", "maze7x7-umaze", "maze9x9-medium", each
// with optional "-dense" suffix, and "chain<N>"), or a path to a maze JSON
// file {"width","height","walls":[[x,y],..],"start","goal","reward_mode",
// "horizon"}.
std::unique_ptr<Env> make_env(const std::string& name_or_path);

std::unique_ptr<GridMaze> load_maze_json(const std::string& path);

BehaviorPolicySpec parse_policy_spec(const std::string& text, double noise);

struct StitchCheck {
  // no logged episode both starts at the env start and attains the optimal
  // return
  bool no_single_optimal = false;
  // the union of logged transitions still contains a start -> goal path
  bool union_path_exists = false;
  bool ok() const { return no_single_optimal && union_path_exists; }
};

// Verifies the precondition that makes a stitching benchmark meaningful.
StitchCheck check_stitch_dataset(const GridMaze& env,
                                 const std::vector<Trajectory>& trajs);

}  // namespace qdc
