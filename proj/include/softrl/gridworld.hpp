// SPDX-License-Identifier: Apache-2.0
//
// Continuous 2-D gridworld: axis-aligned impassable walls, a fixed start,
// disc-shaped per-timestep reward regions, 500-step episodes. Stepping is a
// pure function of (layout, state, action); collisions resolve one axis at a
// time against wall faces, and wall spans exceed the step length so motion
// cannot tunnel.

#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "softrl/tensor.hpp"

namespace softrl {

struct WallRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool strictly_inside(double px, double py) const {
    return px > x0 && px < x1 && py > y0 && py < y1;
  }
};

struct RewardRegion {
  double cx = 0, cy = 0, radius = 0, value = 0;

  bool contains(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
};

enum class LayoutKind { Dense, Sparse };

struct GridLayout {
  double width = 150.0;
  double height = 150.0;
  double start_x = 0.0;
  double start_y = 0.0;
  double step_length = 5.0;
  int max_episode_steps = 500;
  std::vector<WallRect> walls;
  std::vector<RewardRegion> rewards;

  void validate() const {
    if (width <= 0 || height <= 0 || step_length <= 0 || max_episode_steps <= 0)
      throw std::invalid_argument("layout: non-positive dimension");
    for (const WallRect& w : walls) {
      if (!(w.x1 > w.x0 && w.y1 > w.y0))
        throw std::invalid_argument("layout: empty wall rectangle");
      if (!(w.x1 - w.x0 > step_length && w.y1 - w.y0 > step_length))
        throw std::invalid_argument(
            "layout: wall spans must exceed the step length on both axes");
      if (w.strictly_inside(start_x, start_y))
        throw std::invalid_argument("layout: start lies inside a wall");
      for (const RewardRegion& r : rewards)
        if (w.strictly_inside(r.cx, r.cy))
          throw std::invalid_argument("layout: reward center inside a wall");
    }
  }
};

struct EnvState {
  double x = 0.0;
  double y = 0.0;
  int steps = 0;
};

struct StepOutcome {
  Tensor observation;  // 1 x 2 normalized position in [-1,1]^2
  double reward = 0.0;
  bool done = false;
};

inline Tensor observe(const GridLayout& layout, const EnvState& s) {
  Tensor o(1, 2);
  o[0] = 2.0 * (s.x / layout.width) - 1.0;
  o[1] = 2.0 * (s.y / layout.height) - 1.0;
  return o;
}

inline std::pair<EnvState, Tensor> env_reset(const GridLayout& layout) {
  EnvState s;
  s.x = layout.start_x;
  s.y = layout.start_y;
  s.steps = 0;
  return {s, observe(layout, s)};
}

inline double reward_at(const GridLayout& layout, double x, double y) {
  double r = 0.0;
  for (const RewardRegion& g : layout.rewards)
    if (g.contains(x, y)) r += g.value;
  return r;
}

namespace detail {

inline double resolve_x(const GridLayout& layout, double x, double y, double nx) {
  for (const WallRect& w : layout.walls) {
    if (!(y > w.y0 && y < w.y1)) continue;
    if (x <= w.x0 && nx > w.x0) nx = w.x0;
    else if (x >= w.x1 && nx < w.x1) nx = w.x1;
  }
  if (nx < 0.0) nx = 0.0;
  if (nx > layout.width) nx = layout.width;
  return nx;
}

inline double resolve_y(const GridLayout& layout, double x, double y, double ny) {
  for (const WallRect& w : layout.walls) {
    if (!(x > w.x0 && x < w.x1)) continue;
    if (y <= w.y0 && ny > w.y0) ny = w.y0;
    else if (y >= w.y1 && ny < w.y1) ny = w.y1;
  }
  if (ny < 0.0) ny = 0.0;
  if (ny > layout.height) ny = layout.height;
  return ny;
}

}  // namespace detail

// One transition. The displacement is action * step_length, resolved first
// along x and then along y against every wall face. Reward is the sum of
// region values containing the end position; done fires exactly at the
// episode step limit.
inline std::pair<EnvState, StepOutcome> env_step(const GridLayout& layout,
                                                 const EnvState& state,
                                                 double ax, double ay) {
  if (!(std::isfinite(ax) && std::isfinite(ay)))
    throw std::invalid_argument("env_step: non-finite action");
  if (ax > 1.0) ax = 1.0;
  if (ax < -1.0) ax = -1.0;
  if (ay > 1.0) ay = 1.0;
  if (ay < -1.0) ay = -1.0;

  EnvState next = state;
  next.x = detail::resolve_x(layout, state.x, state.y, state.x + ax * layout.step_length);
  next.y = detail::resolve_y(layout, next.x, state.y, state.y + ay * layout.step_length);
  next.steps = state.steps + 1;

  StepOutcome out;
  out.observation = observe(layout, next);
  out.reward = reward_at(layout, next.x, next.y);
  out.done = next.steps >= layout.max_episode_steps;
  return {next, out};
}

// --- layout text format --------------------------------------------------

inline std::string format_layout(const GridLayout& layout,
                                 const std::string& title) {
  std::ostringstream os;
  os << "format: softrl-layout-v1\n";
  os << "# " << title << "\n";
  os << "# Hand-authored arena geometry; coordinates are benchmark choices,\n";
  os << "# not calibrated measurements.\n";
  os << "width: " << layout.width << "\n";
  os << "height: " << layout.height << "\n";
  os << "start: " << layout.start_x << " " << layout.start_y << "\n";
  os << "step_length: " << layout.step_length << "\n";
  os << "max_episode_steps: " << layout.max_episode_steps << "\n";
  for (const WallRect& w : layout.walls)
    os << "wall: " << w.x0 << " " << w.y0 << " " << w.x1 << " " << w.y1 << "\n";
  for (const RewardRegion& r : layout.rewards)
    os << "reward: " << r.cx << " " << r.cy << " " << r.radius << " " << r.value
       << "\n";
  return os.str();
}

inline GridLayout parse_layout(const std::string& text) {
  GridLayout layout;
  layout.walls.clear();
  layout.rewards.clear();
  std::istringstream is(text);
  std::string line;
  bool saw_format = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format:") {
      std::string v;
      ls >> v;
      if (v != "softrl-layout-v1")
        throw std::invalid_argument("layout: unsupported format " + v);
      saw_format = true;
    } else if (key == "width:")
      ls >> layout.width;
    else if (key == "height:")
      ls >> layout.height;
    else if (key == "start:")
      ls >> layout.start_x >> layout.start_y;
    else if (key == "step_length:")
      ls >> layout.step_length;
    else if (key == "max_episode_steps:")
      ls >> layout.max_episode_steps;
    else if (key == "wall:") {
      WallRect w;
      ls >> w.x0 >> w.y0 >> w.x1 >> w.y1;
      layout.walls.push_back(w);
    } else if (key == "reward:") {
      RewardRegion r;
      ls >> r.cx >> r.cy >> r.radius >> r.value;
      layout.rewards.push_back(r);
    } else
      throw std::invalid_argument("layout: unknown key " + key);
    if (ls.fail())
      throw std::invalid_argument("layout: malformed line: " + line);
  }
  if (!saw_format) throw std::invalid_argument("layout: missing format line");
  layout.validate();
  return layout;
}

// The arena: start on the left, one thick interior barrier with a passage
// along the top, the goal deep on the far side. Dense adds small sub-goal
// discs, the nearest of which sits close to the start.
inline constexpr const char* kSparseLayoutText =
    "format: softrl-layout-v1\n"
    "# sparse arena: single goal disc worth 100 per step\n"
    "# Hand-authored arena geometry; coordinates are benchmark choices,\n"
    "# not calibrated measurements.\n"
    "width: 150\n"
    "height: 150\n"
    "start: 20 75\n"
    "step_length: 5\n"
    "max_episode_steps: 500\n"
    "wall: 70 45 80 150\n"
    "reward: 125 25 5 100\n";

inline constexpr const char* kDenseLayoutText =
    "format: softrl-layout-v1\n"
    "# dense arena: the sparse goal plus 5-per-step sub-goal discs\n"
    "# Hand-authored arena geometry; coordinates are benchmark choices,\n"
    "# not calibrated measurements.\n"
    "width: 150\n"
    "height: 150\n"
    "start: 20 75\n"
    "step_length: 5\n"
    "max_episode_steps: 500\n"
    "wall: 70 45 80 150\n"
    "reward: 125 25 5 100\n"
    "reward: 40 50 5 5\n"
    "reward: 95 30 5 5\n";

inline GridLayout make_layout(LayoutKind kind) {
  return parse_layout(kind == LayoutKind::Sparse ? kSparseLayoutText
                                                 : kDenseLayoutText);
}

inline LayoutKind layout_kind_from_name(const std::string& name) {
  if (name == "dense") return LayoutKind::Dense;
  if (name == "sparse") return LayoutKind::Sparse;
  throw std::invalid_argument("unknown layout kind: " + name);
}

inline const char* layout_kind_name(LayoutKind k) {
  return k == LayoutKind::Dense ? "dense" : "sparse";
}

}  // namespace softrl
