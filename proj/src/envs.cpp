#include "qdc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qdc/errors.hpp"

namespace qdc {

namespace {

constexpr Cell kDirs[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

std::vector<double> uniform_action(int dim, Rng& rng) {
  std::vector<double> a(static_cast<size_t>(dim));
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  return a;
}

}  // namespace

GridMaze::GridMaze(int width, int height, std::vector<Cell> walls, Cell start,
                   Cell goal, RewardMode reward_mode, int horizon,
                   std::string name)
    : width_(width),
      height_(height),
      wall_(static_cast<size_t>(width) * height, 0),
      start_(start),
      goal_(goal),
      reward_mode_(reward_mode),
      horizon_(horizon),
      name_(std::move(name)),
      pos_(start) {
  if (width < 2 || height < 2) throw ConfigError("maze: needs width,height >= 2");
  if (horizon < 0) throw ConfigError("maze: horizon must be >= 0");
  for (Cell w : walls) {
    if (!in_bounds(w)) throw ConfigError("maze: wall out of bounds");
    wall_[static_cast<size_t>(idx(w))] = 1;
  }
  if (!in_bounds(start_) || !in_bounds(goal_))
    throw ConfigError("maze: start/goal out of bounds");
  if (is_wall(start_) || is_wall(goal_))
    throw ConfigError("maze: start/goal inside a wall");
  if (start_ == goal_) throw ConfigError("maze: start equals goal");
  // goal must be reachable (flood fill)
  if (shortest_distance(start_, goal_) < 0)
    throw ConfigError("maze: goal not reachable from start");
}

bool GridMaze::in_bounds(Cell c) const {
  return c.x >= 0 && c.x < width_ && c.y >= 0 && c.y < height_;
}

bool GridMaze::is_wall(Cell c) const {
  return wall_[static_cast<size_t>(idx(c))] != 0;
}

std::vector<double> GridMaze::encode(Cell c) const {
  return {2.0 * c.x / (width_ - 1) - 1.0, 2.0 * c.y / (height_ - 1) - 1.0};
}

std::vector<double> GridMaze::reset() {
  pos_ = start_;
  steps_ = 0;
  done_ = steps_ >= horizon_;
  reached_goal_ = false;
  return encode(pos_);
}

void GridMaze::reset_to(Cell c) {
  if (!in_bounds(c) || is_wall(c)) throw UsageError("reset_to: invalid cell");
  reset();
  pos_ = c;
}

double GridMaze::reward_at(Cell c) const {
  if (reward_mode_ == RewardMode::sparse) return c == goal_ ? 1.0 : 0.0;
  const int dist = std::abs(c.x - goal_.x) + std::abs(c.y - goal_.y);
  return -static_cast<double>(dist) / (width_ + height_);
}

StepResult GridMaze::step(const std::vector<double>& action) {
  if (done_) throw UsageError("step after terminal state");
  if (action.size() != 2) {
    throw DimensionError("maze action must have 2 entries, got " +
                         std::to_string(action.size()));
  }
  // snap to the dominant cardinal direction; an all-zero action stays put
  Cell next = pos_;
  const double ax = action[0], ay = action[1];
  if (std::abs(ax) >= std::abs(ay)) {
    next.x += ax > 0.0 ? 1 : (ax < 0.0 ? -1 : 0);
  } else {
    next.y += ay > 0.0 ? 1 : -1;
  }
  if (!in_bounds(next) || is_wall(next)) next = pos_;
  pos_ = next;
  ++steps_;
  reached_goal_ = pos_ == goal_;
  done_ = reached_goal_ || steps_ >= horizon_;
  return {encode(pos_), reward_at(pos_), done_};
}

std::vector<int> GridMaze::distances(Cell from) const {
  std::vector<int> dist(static_cast<size_t>(width_) * height_, -1);
  std::deque<Cell> queue;
  dist[static_cast<size_t>(idx(from))] = 0;
  queue.push_back(from);
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (Cell d : kDirs) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (!in_bounds(n) || is_wall(n)) continue;
      if (dist[static_cast<size_t>(idx(n))] >= 0) continue;
      dist[static_cast<size_t>(idx(n))] = dist[static_cast<size_t>(idx(c))] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

int GridMaze::shortest_distance(Cell from, Cell to) const {
  return distances(from)[static_cast<size_t>(idx(to))];
}

Cell GridMaze::bfs_step(Cell from, const std::vector<int>& dist) const {
  Cell best = from;
  int best_d = dist[static_cast<size_t>(idx(from))];
  if (best_d < 0) return from;
  for (Cell d : kDirs) {
    const Cell n{from.x + d.x, from.y + d.y};
    if (!in_bounds(n) || is_wall(n)) continue;
    const int nd = dist[static_cast<size_t>(idx(n))];
    if (nd >= 0 && nd < best_d) {
      best = n;
      best_d = nd;
    }
  }
  return best;
}

std::vector<double> GridMaze::scripted_action(Cell from, Cell to) const {
  if (to == from) return {0.0, 0.0};
  if (to.x > from.x) return {1.0, 0.0};
  if (to.x < from.x) return {-1.0, 0.0};
  if (to.y > from.y) return {0.0, 1.0};
  return {0.0, -1.0};
}

Cell GridMaze::waypoint() const {
  const auto dist_goal = distances(goal_);
  std::vector<Cell> path{start_};
  Cell cur = start_;
  while (!(cur == goal_)) {
    cur = bfs_step(cur, dist_goal);
    path.push_back(cur);
  }
  return path[path.size() / 2];
}

double GridMaze::optimal_return() const {
  if (static_cast<long>(width_) * height_ > 1000000) {
    throw ConfigError("maze too large for exact search");
  }
  // finite-horizon value iteration; goal is absorbing
  const size_t n = static_cast<size_t>(width_) * height_;
  std::vector<double> v(n, 0.0), v_next(n, 0.0);
  for (int k = 0; k < horizon_; ++k) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const Cell c{x, y};
        if (is_wall(c) || c == goal_) {
          v_next[static_cast<size_t>(idx(c))] = 0.0;
          continue;
        }
        double best = reward_at(c) + v[static_cast<size_t>(idx(c))];  // stay
        for (Cell d : kDirs) {
          Cell nc{x + d.x, y + d.y};
          if (!in_bounds(nc) || is_wall(nc)) nc = c;
          const double val =
              reward_at(nc) +
              (nc == goal_ ? 0.0 : v[static_cast<size_t>(idx(nc))]);
          best = std::max(best, val);
        }
        v_next[static_cast<size_t>(idx(c))] = best;
      }
    }
    std::swap(v, v_next);
  }
  return v[static_cast<size_t>(idx(start_))];
}

std::vector<Trajectory> GridMaze::generate_dataset(
    const BehaviorPolicySpec& spec, int episodes, Rng& rng) const {
  if (episodes < 1) throw ConfigError("generate_dataset: episodes must be >= 1");

  const Cell wp = waypoint();
  const auto dist_goal = distances(goal_);
  const auto dist_wp = distances(wp);
  const auto dist_start = distances(start_);
  const int d_total = dist_goal[static_cast<size_t>(idx(start_))];
  const int d_wp_goal = dist_goal[static_cast<size_t>(idx(wp))];
  const int d_start_wp = dist_wp[static_cast<size_t>(idx(start_))];

  // Segment caps: A stays strictly below the steps needed to reach the goal
  // from the start, so no A episode can ever score; B gets slack to absorb
  // noise detours.
  const int cap_a = std::max(d_start_wp + 1, d_total - 2);
  const int cap_b = d_wp_goal + 5;

  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    PolicyKind kind = spec.kind;
    if (kind == PolicyKind::stitch_mix) {
      kind = ep % 2 == 0 ? PolicyKind::segment_a : PolicyKind::segment_b;
    }

    auto env = std::make_unique<GridMaze>(*this);
    env->reset();
    int cap = horizon_;
    if (kind == PolicyKind::segment_a) {
      cap = std::min(cap, cap_a);
    } else if (kind == PolicyKind::segment_b) {
      env->reset_to(wp);
      cap = std::min(cap, cap_b);
    }

    Trajectory traj;
    int loiter = -1;  // -1 while heading to the waypoint
    int t = 0;
    while (!env->done() && t < cap) {
      const Cell cur = env->position();
      std::vector<double> a;
      if (spec.noise > 0.0 && rng.uniform() < spec.noise) {
        a = uniform_action(2, rng);
      } else {
        switch (kind) {
          case PolicyKind::random:
            a = uniform_action(2, rng);
            break;
          case PolicyKind::noisy_expert:
          case PolicyKind::segment_b:
            a = scripted_action(cur, bfs_step(cur, dist_goal));
            break;
          case PolicyKind::segment_a: {
            if (loiter < 0 && cur == wp) loiter = 0;
            if (loiter < 0) {
              a = scripted_action(cur, bfs_step(cur, dist_wp));
            } else {
              // loiter near the waypoint: two steps back toward the start,
              // two steps forward again
              const auto& field = (loiter % 4) < 2 ? dist_start : dist_wp;
              a = scripted_action(cur, bfs_step(cur, field));
              ++loiter;
            }
            break;
          }
          case PolicyKind::stitch_mix:
            a = uniform_action(2, rng);  // unreachable
            break;
        }
      }
      traj.states.push_back(env->encode(cur));
      traj.actions.push_back(a);
      const StepResult res = env->step(a);
      traj.rewards.push_back(res.reward);
      ++t;
    }
    traj.terminal = env->succeeded();
    traj.rtg = compute_rtg(traj.rewards);
    out.push_back(std::move(traj));
  }
  return out;
}

ChainMDP::ChainMDP(int n_states, int horizon)
    : n_states_(n_states), horizon_(horizon) {
  if (n_states < 2) throw ConfigError("chain: needs >= 2 states");
  if (horizon < 0) throw ConfigError("chain: horizon must be >= 0");
}

std::vector<double> ChainMDP::encode(int s) const {
  return {2.0 * s / (n_states_ - 1) - 1.0};
}

std::vector<double> ChainMDP::reset() {
  pos_ = 0;
  steps_ = 0;
  done_ = steps_ >= horizon_;
  reached_end_ = false;
  return encode(pos_);
}

void ChainMDP::reset_to(int s) {
  if (s < 0 || s >= n_states_) throw UsageError("reset_to: invalid state");
  reset();
  pos_ = s;
}

StepResult ChainMDP::step(const std::vector<double>& action) {
  if (done_) throw UsageError("step after terminal state");
  if (action.size() != 1) {
    throw DimensionError("chain action must have 1 entry, got " +
                         std::to_string(action.size()));
  }
  pos_ = action[0] >= 0.0 ? std::min(pos_ + 1, n_states_ - 1)
                          : std::max(pos_ - 1, 0);
  ++steps_;
  reached_end_ = pos_ == n_states_ - 1;
  done_ = reached_end_ || steps_ >= horizon_;
  const double reward = reached_end_ ? 1.0 : 0.0;
  return {encode(pos_), reward, done_};
}

double ChainMDP::optimal_return() const {
  return n_states_ - 1 <= horizon_ ? 1.0 : 0.0;
}

std::vector<Trajectory> ChainMDP::generate_dataset(
    const BehaviorPolicySpec& spec, int episodes, Rng& rng) const {
  if (episodes < 1) throw ConfigError("generate_dataset: episodes must be >= 1");
  const int wp = (n_states_ - 1) / 2;
  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    PolicyKind kind = spec.kind;
    if (kind == PolicyKind::stitch_mix) {
      kind = ep % 2 == 0 ? PolicyKind::segment_a : PolicyKind::segment_b;
    }
    auto env = std::make_unique<ChainMDP>(*this);
    env->reset();
    int cap = horizon_;
    if (kind == PolicyKind::segment_a) {
      cap = std::min(cap, std::max(wp + 1, n_states_ - 3));
    } else if (kind == PolicyKind::segment_b) {
      env->reset_to(wp);
      cap = std::min(cap, (n_states_ - 1 - wp) + 3);
    }

    Trajectory traj;
    int loiter = -1;
    int t = 0;
    while (!env->done() && t < cap) {
      const int cur = env->position();
      std::vector<double> a;
      if (spec.noise > 0.0 && rng.uniform() < spec.noise) {
        a = uniform_action(1, rng);
      } else {
        switch (kind) {
          case PolicyKind::random:
            a = uniform_action(1, rng);
            break;
          case PolicyKind::noisy_expert:
          case PolicyKind::segment_b:
            a = {1.0};
            break;
          case PolicyKind::segment_a: {
            if (loiter < 0 && cur == wp) loiter = 0;
            if (loiter < 0) {
              a = {cur < wp ? 1.0 : -1.0};
            } else {
              a = {(loiter % 2) == 0 ? -1.0 : 1.0};
              ++loiter;
            }
            break;
          }
          case PolicyKind::stitch_mix:
            a = uniform_action(1, rng);  // unreachable
            break;
        }
      }
      traj.states.push_back(env->encode(cur));
      traj.actions.push_back(a);
      const StepResult res = env->step(a);
      traj.rewards.push_back(res.reward);
      ++t;
    }
    traj.terminal = env->succeeded();
    traj.rtg = compute_rtg(traj.rewards);
    out.push_back(std::move(traj));
  }
  return out;
}

double normalized_score(double raw_return, double optimal_return,
                        double random_policy_return) {
  if (!(optimal_return > random_policy_return)) {
    throw ConfigError("normalized_score: optimal must exceed random baseline");
  }
  return 100.0 * (raw_return - random_policy_return) /
         (optimal_return - random_policy_return);
}

double random_policy_return(const Env& env, int episodes, uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto e = env.clone();
    e->reset();
    double ret = 0.0;
    while (!e->done()) {
      ret += e->step(uniform_action(e->action_dim(), rng)).reward;
    }
    total += ret;
  }
  return total / episodes;
}

namespace {

std::unique_ptr<GridMaze> builtin_maze(const std::string& base,
                                       RewardMode mode,
                                       const std::string& full_name) {
  if (base == "maze5x5-open") {
    return std::make_unique<GridMaze>(5, 5, std::vector<Cell>{}, Cell{0, 4},
                                      Cell{4, 0}, mode, 30, full_name);
  }
  if (base == "maze7x7-umaze") {
    std::vector<Cell> walls;
    for (int y = 1; y <= 6; ++y) walls.push_back({3, y});
    return std::make_unique<GridMaze>(7, 7, walls, Cell{0, 6}, Cell{6, 6},
                                      mode, 60, full_name);
  }
  if (base == "maze9x9-medium") {
    std::vector<Cell> walls;
    for (int y = 0; y <= 6; ++y) walls.push_back({2, y});
    for (int y = 2; y <= 8; ++y) walls.push_back({6, y});
    return std::make_unique<GridMaze>(9, 9, walls, Cell{0, 0}, Cell{8, 8},
                                      mode, 100, full_name);
  }
  return nullptr;
}

}  // namespace

std::unique_ptr<GridMaze> load_maze_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open maze file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid maze JSON in " + path + ": " + e.what());
  }
  for (const char* key :
       {"width", "height", "walls", "start", "goal", "reward_mode", "horizon"}) {
    if (!j.contains(key))
      throw ConfigError("maze JSON missing key \"" + std::string(key) + "\"");
  }
  std::vector<Cell> walls;
  for (const auto& w : j["walls"])
    walls.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
  const std::string mode_str = j["reward_mode"].get<std::string>();
  if (mode_str != "sparse" && mode_str != "dense") {
    throw ConfigError("maze JSON reward_mode must be \"sparse\" or \"dense\"");
  }
  return std::make_unique<GridMaze>(
      j["width"].get<int>(), j["height"].get<int>(), walls,
      Cell{j["start"].at(0).get<int>(), j["start"].at(1).get<int>()},
      Cell{j["goal"].at(0).get<int>(), j["goal"].at(1).get<int>()},
      mode_str == "dense" ? RewardMode::dense : RewardMode::sparse,
      j["horizon"].get<int>(),
      std::filesystem::path(path).stem().string());
}

std::unique_ptr<Env> make_env(const std::string& name_or_path) {
  if (name_or_path.rfind("chain", 0) == 0 && name_or_path.size() > 5 &&
      name_or_path.find('.') == std::string::npos) {
    const std::string num = name_or_path.substr(5);
    if (!num.empty() &&
        std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(c); })) {
      const int n = std::stoi(num);
      return std::make_unique<ChainMDP>(n, 2 * n);
    }
  }
  std::string base = name_or_path;
  RewardMode mode = RewardMode::sparse;
  const std::string dense_suffix = "-dense";
  if (base.size() > dense_suffix.size() &&
      base.compare(base.size() - dense_suffix.size(), dense_suffix.size(),
                   dense_suffix) == 0) {
    base = base.substr(0, base.size() - dense_suffix.size());
    mode = RewardMode::dense;
  }
  if (auto maze = builtin_maze(base, mode, name_or_path)) return maze;
  if (std::filesystem::exists(name_or_path)) return load_maze_json(name_or_path);
  throw ConfigError("unknown environment: " + name_or_path);
}

StitchCheck check_stitch_dataset(const GridMaze& env,
                                 const std::vector<Trajectory>& trajs) {
  StitchCheck out;
  const std::vector<double> start_enc = env.encode(env.start());
  const double optimal = env.optimal_return();

  auto decode = [&env](const std::vector<double>& s) {
    return Cell{
        static_cast<int>(std::lround((s[0] + 1.0) * (env.width() - 1) / 2.0)),
        static_cast<int>(std::lround((s[1] + 1.0) * (env.height() - 1) / 2.0))};
  };

  out.no_single_optimal = true;
  for (const Trajectory& t : trajs) {
    if (t.states[0] == start_enc && t.total_return() >= optimal) {
      out.no_single_optimal = false;
      break;
    }
  }

  // graph search over the union of logged transitions
  const size_t n = static_cast<size_t>(env.width()) * env.height();
  std::vector<std::vector<int>> adj(n);
  auto cell_idx = [&env](Cell c) { return c.y * env.width() + c.x; };
  for (const Trajectory& t : trajs) {
    for (int i = 0; i + 1 < t.length(); ++i) {
      adj[static_cast<size_t>(cell_idx(decode(t.states[static_cast<size_t>(i)])))]
          .push_back(cell_idx(decode(t.states[static_cast<size_t>(i + 1)])));
    }
    if (t.terminal && t.length() >= 1) {
      // the final transition lands on the goal even though the goal state
      // itself is not logged
      adj[static_cast<size_t>(
              cell_idx(decode(t.states[static_cast<size_t>(t.length() - 1)])))]
          .push_back(cell_idx(env.goal()));
    }
  }
  std::vector<uint8_t> seen(n, 0);
  std::deque<int> queue{cell_idx(env.start())};
  seen[static_cast<size_t>(cell_idx(env.start()))] = 1;
  while (!queue.empty()) {
    const int c = queue.front();
    queue.pop_front();
    for (int nb : adj[static_cast<size_t>(c)]) {
      if (!seen[static_cast<size_t>(nb)]) {
        seen[static_cast<size_t>(nb)] = 1;
        queue.push_back(nb);
      }
    }
  }
  out.union_path_exists = seen[static_cast<size_t>(cell_idx(env.goal()))] != 0;
  return out;
}

BehaviorPolicySpec parse_policy_spec(const std::string& text, double noise) {
  BehaviorPolicySpec spec;
  spec.noise = noise;
  if (text == "random") {
    spec.kind = PolicyKind::random;
  } else if (text == "noisy-expert") {
    spec.kind = PolicyKind::noisy_expert;
  } else if (text == "segment-a") {
    spec.kind = PolicyKind::segment_a;
  } else if (text == "segment-b") {
    spec.kind = PolicyKind::segment_b;
  } else if (text == "stitch-mix") {
    spec.kind = PolicyKind::stitch_mix;
  } else {
    throw ConfigError("unknown behavior policy: " + text);
  }
  return spec;
}

}  // namespace qdc
