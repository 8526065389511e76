#include "scope/environment.hpp"

#include <algorithm>
#include <string>

#include "scope/error.hpp"

namespace scope {
namespace {

void check_action(int action, int count) {
  if (action < 0 || action >= count) {
    throw InvalidArgument("action " + std::to_string(action) + " outside [0, " +
                          std::to_string(count) + ")");
  }
}

double unit_interval(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void EnvConfig::validate() const {
  if (frame_skip < 1) throw ConfigError("frame_skip must be >= 1");
  if (!(sticky_prob >= 0.0 && sticky_prob <= 1.0)) {
    throw ConfigError("sticky_prob must lie in [0, 1]");
  }
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (height < 1 || width < 1) throw ConfigError("frame dimensions must be positive");
}

// ---------------------------------------------------------------------------
// ShooterGame

ShooterGame::ShooterGame(int height, int width, ShooterRules rules)
    : height_(height), width_(width), rules_(std::move(rules)) {
  const ShooterRules& r = rules_;
  if (r.enemy_rows < 1 || r.enemy_cols < 1 || r.enemy_width < 1 || r.enemy_height < 1 ||
      r.enemy_spacing_x < r.enemy_width || r.enemy_spacing_y < r.enemy_height) {
    throw ConfigError("invalid enemy formation geometry");
  }
  if (static_cast<int>(r.row_scores.size()) != r.enemy_rows) {
    throw ConfigError("row_scores needs one entry per enemy row");
  }
  if (std::any_of(r.row_scores.begin(), r.row_scores.end(), [](int s) { return s < 0; })) {
    throw ConfigError("row scores must be nonnegative");
  }
  if (r.march_period < 1 || r.descent < 1 || r.player_speed < 0 || r.lives < 1 ||
      r.bullet_speed < 1 || r.enemy_bullet_speed < 1 || r.bullet_height < 1 ||
      r.enemy_bullet_height < 1 || r.max_enemy_bullets < 0 || r.enemy_fire_per_mille < 0 ||
      r.player_width < 1 || r.player_height < 1 || r.player_bottom_margin < 0) {
    throw ConfigError("invalid shooter timing or player settings");
  }
  const int formation_width = (r.enemy_cols - 1) * r.enemy_spacing_x + r.enemy_width;
  const int formation_bottom = r.formation_top + (r.enemy_rows - 1) * r.enemy_spacing_y + r.enemy_height;
  player_top_ = height_ - r.player_bottom_margin - r.player_height;
  if (formation_width > width_ || r.player_width > width_) {
    throw ConfigError("enemy formation does not fit the screen width");
  }
  if (r.formation_top < 0 || formation_bottom >= player_top_) {
    throw ConfigError("enemy formation does not fit above the player");
  }
  alive_.assign(static_cast<std::size_t>(r.enemy_rows * r.enemy_cols), 0);
  canvas_.assign(static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_), 0);
}

std::uint64_t ShooterGame::next_random() { return rng_(); }

int ShooterGame::enemy_x(int col) const { return origin_x_ + col * rules_.enemy_spacing_x; }
int ShooterGame::enemy_y(int row) const { return origin_y_ + row * rules_.enemy_spacing_y; }

bool ShooterGame::alive(int row, int col) const {
  return alive_[static_cast<std::size_t>(row * rules_.enemy_cols + col)] != 0;
}

Frame ShooterGame::reset(std::uint64_t seed) {
  const ShooterRules& r = rules_;
  rng_.seed(seed);
  std::fill(alive_.begin(), alive_.end(), 1);
  alive_count_ = r.enemy_rows * r.enemy_cols;

  const int formation_width = (r.enemy_cols - 1) * r.enemy_spacing_x + r.enemy_width;
  const auto slack = static_cast<std::uint64_t>(width_ - formation_width + 1);
  origin_x_ = static_cast<int>(next_random() % slack);
  direction_ = (next_random() & 1U) != 0 ? 1 : -1;
  origin_y_ = r.formation_top;
  march_counter_ = 0;

  player_x_ = (width_ - r.player_width) / 2;
  lives_ = r.lives;
  player_bullets_.clear();
  enemy_bullets_.clear();
  ticks_ = 0;
  started_ = true;
  terminated_ = false;
  render();
  return Frame::from_gray8(height_, width_, canvas_);
}

int ShooterGame::march_interval() const {
  const int total = rules_.enemy_rows * rules_.enemy_cols;
  return 1 + (rules_.march_period * alive_count_ - 1) / total;
}

void ShooterGame::march() {
  if (++march_counter_ < march_interval()) return;
  march_counter_ = 0;

  int left_col = rules_.enemy_cols;
  int right_col = -1;
  for (int c = 0; c < rules_.enemy_cols; ++c) {
    for (int row = 0; row < rules_.enemy_rows; ++row) {
      if (alive(row, c)) {
        left_col = std::min(left_col, c);
        right_col = std::max(right_col, c);
        break;
      }
    }
  }
  if (right_col < 0) return;

  const int left_edge = enemy_x(left_col) + direction_;
  const int right_edge = enemy_x(right_col) + rules_.enemy_width + direction_;
  if (left_edge < 0 || right_edge > width_) {
    origin_y_ += rules_.descent;
    direction_ = -direction_;
  } else {
    origin_x_ += direction_;
  }
}

void ShooterGame::move_player_bullet(double& reward) {
  if (player_bullets_.empty()) return;
  Bullet& b = player_bullets_.front();
  const int new_y = b.y - rules_.bullet_speed;
  // Swept span covered this tick: [new_y, old_y + height).
  const int span_top = new_y;
  const int span_bottom = b.y + rules_.bullet_height;

  for (int row = rules_.enemy_rows - 1; row >= 0; --row) {
    const int ey = enemy_y(row);
    if (ey >= span_bottom || ey + rules_.enemy_height <= span_top) continue;
    for (int c = 0; c < rules_.enemy_cols; ++c) {
      const int ex = enemy_x(c);
      if (!alive(row, c) || b.x < ex || b.x >= ex + rules_.enemy_width) continue;
      alive_[static_cast<std::size_t>(row * rules_.enemy_cols + c)] = 0;
      --alive_count_;
      reward += rules_.row_scores[static_cast<std::size_t>(row)];
      player_bullets_.clear();
      return;
    }
  }
  if (new_y + rules_.bullet_height <= 0) {
    player_bullets_.clear();
  } else {
    b.y = new_y;
  }
}

void ShooterGame::enemy_fire() {
  if (static_cast<int>(enemy_bullets_.size()) >= rules_.max_enemy_bullets) return;
  if (static_cast<int>(next_random() % 1000) >= rules_.enemy_fire_per_mille) return;

  std::vector<int> columns;
  for (int c = 0; c < rules_.enemy_cols; ++c) {
    for (int row = 0; row < rules_.enemy_rows; ++row) {
      if (alive(row, c)) {
        columns.push_back(c);
        break;
      }
    }
  }
  if (columns.empty()) return;
  const int col = columns[next_random() % columns.size()];
  int lowest = 0;
  for (int row = 0; row < rules_.enemy_rows; ++row) {
    if (alive(row, col)) lowest = row;
  }
  enemy_bullets_.push_back(
      {enemy_x(col) + rules_.enemy_width / 2, enemy_y(lowest) + rules_.enemy_height});
}

void ShooterGame::move_enemy_bullets() {
  const int px0 = player_x_;
  const int px1 = player_x_ + rules_.player_width;
  const int py0 = player_top_;
  const int py1 = player_top_ + rules_.player_height;
  for (auto it = enemy_bullets_.begin(); it != enemy_bullets_.end();) {
    const int new_y = it->y + rules_.enemy_bullet_speed;
    const int span_top = it->y;
    const int span_bottom = new_y + rules_.enemy_bullet_height;
    if (it->x >= px0 && it->x < px1 && span_top < py1 && span_bottom > py0) {
      --lives_;
      enemy_bullets_.clear();
      return;
    }
    if (new_y >= height_) {
      it = enemy_bullets_.erase(it);
    } else {
      it->y = new_y;
      ++it;
    }
  }
}

bool ShooterGame::invaders_landed() const {
  for (int row = rules_.enemy_rows - 1; row >= 0; --row) {
    for (int c = 0; c < rules_.enemy_cols; ++c) {
      if (alive(row, c)) return enemy_y(row) + rules_.enemy_height > player_top_;
    }
  }
  return false;
}

double ShooterGame::tick(int action) {
  if (!started_) throw LifecycleError("step() called before reset()");
  if (terminated_) throw LifecycleError("step() called on a terminated episode; reset first");
  check_action(action, kActionCount);

  const auto a = static_cast<Action>(action);
  const bool fire = a == Action::Fire || a == Action::LeftFire || a == Action::RightFire;
  int move = 0;
  if (a == Action::Left || a == Action::LeftFire) move = -1;
  if (a == Action::Right || a == Action::RightFire) move = 1;

  ++ticks_;
  player_x_ = std::clamp(player_x_ + move * rules_.player_speed, 0, width_ - rules_.player_width);
  if (fire && player_bullets_.empty()) {
    player_bullets_.push_back(
        {player_x_ + rules_.player_width / 2, player_top_ - rules_.bullet_height});
  }

  double reward = 0.0;
  move_player_bullet(reward);
  march();
  enemy_fire();
  move_enemy_bullets();

  terminated_ = alive_count_ == 0 || lives_ <= 0 || invaders_landed();
  return reward;
}

StepResult ShooterGame::step(int action) {
  const double reward = tick(action);
  render();
  return {Frame::from_gray8(height_, width_, canvas_), reward, terminated_};
}

StepResult ShooterGame::advance(int action) {
  const double reward = tick(action);
  if (!terminated_) return {Frame(), reward, false};
  render();
  return {Frame::from_gray8(height_, width_, canvas_), reward, true};
}

void ShooterGame::render() {
  std::fill(canvas_.begin(), canvas_.end(), std::uint8_t{0});
  auto fill = [&](int x, int y, int w, int h, std::uint8_t value) {
    const int x0 = std::max(x, 0);
    const int y0 = std::max(y, 0);
    const int x1 = std::min(x + w, width_);
    const int y1 = std::min(y + h, height_);
    for (int yy = y0; yy < y1; ++yy) {
      std::uint8_t* row = canvas_.data() + static_cast<std::size_t>(yy) * width_;
      std::fill(row + x0, row + std::max(x0, x1), value);
    }
  };

  for (int row = 0; row < rules_.enemy_rows; ++row) {
    const auto shade = static_cast<std::uint8_t>(std::max(80, 230 - 20 * row));
    for (int c = 0; c < rules_.enemy_cols; ++c) {
      if (alive(row, c)) {
        fill(enemy_x(c), enemy_y(row), rules_.enemy_width, rules_.enemy_height, shade);
      }
    }
  }
  fill(player_x_, player_top_, rules_.player_width, rules_.player_height, 180);
  for (const Bullet& b : player_bullets_) fill(b.x, b.y, 1, rules_.bullet_height, 255);
  for (const Bullet& b : enemy_bullets_) fill(b.x, b.y, 1, rules_.enemy_bullet_height, 255);
  // Remaining lives as small squares along the bottom edge.
  for (int i = 0; i < lives_; ++i) fill(4 + 8 * i, height_ - 6, 4, 4, 120);
}

// ---------------------------------------------------------------------------
// Wrappers

FrameSkip::FrameSkip(std::unique_ptr<Environment> inner, int skip)
    : inner_(std::move(inner)), skip_(skip) {
  if (!inner_) throw InvalidArgument("FrameSkip needs an environment");
  if (skip_ < 1) throw InvalidArgument("frame skip must be >= 1");
}

StepResult FrameSkip::step(int action) {
  StepResult out;
  double total = 0.0;
  for (int i = 0; i < skip_; ++i) {
    StepResult r = i + 1 < skip_ ? inner_->advance(action) : inner_->step(action);
    total += r.reward;
    out.frame = std::move(r.frame);
    out.terminated = r.terminated;
    if (r.terminated) break;
  }
  out.reward = total;
  return out;
}

StickyActions::StickyActions(std::unique_ptr<Environment> inner, double prob, std::uint64_t seed)
    : inner_(std::move(inner)), prob_(0.0), rng_(seed) {
  if (!inner_) throw InvalidArgument("StickyActions needs an environment");
  set_probability(prob);
}

void StickyActions::set_probability(double prob) {
  if (!(prob >= 0.0 && prob <= 1.0)) {
    throw InvalidArgument("sticky probability must lie in [0, 1]");
  }
  prob_ = prob;
}

void StickyActions::reseed(std::uint64_t seed) {
  rng_.seed(seed);
  draws_ = 0;
  repeats_ = 0;
}

Frame StickyActions::reset(std::uint64_t seed) {
  previous_ = -1;
  return inner_->reset(seed);
}

StepResult StickyActions::step(int action) {
  check_action(action, inner_->action_count());
  int executed = action;
  if (previous_ >= 0) {
    ++draws_;
    if (unit_interval(rng_) < prob_) {
      executed = previous_;
      ++repeats_;
    }
  }
  StepResult r = inner_->step(executed);
  previous_ = executed;
  return r;
}

StepLimit::StepLimit(std::unique_ptr<Environment> inner, int max_steps)
    : inner_(std::move(inner)), max_steps_(max_steps) {
  if (!inner_) throw InvalidArgument("StepLimit needs an environment");
  if (max_steps_ < 1) throw InvalidArgument("max_steps must be >= 1");
}

Frame StepLimit::reset(std::uint64_t seed) {
  Frame f = inner_->reset(seed);
  steps_ = 0;
  terminated_ = false;
  return f;
}

StepResult StepLimit::step(int action) {
  if (terminated_) throw LifecycleError("step() called on a terminated episode; reset first");
  StepResult r = inner_->step(action);
  ++steps_;
  if (steps_ >= max_steps_) r.terminated = true;
  terminated_ = r.terminated;
  return r;
}

std::unique_ptr<Environment> wrap_frame_skip(std::unique_ptr<Environment> env, int skip) {
  return std::make_unique<FrameSkip>(std::move(env), skip);
}

std::unique_ptr<Environment> wrap_sticky(std::unique_ptr<Environment> env, double prob,
                                         std::uint64_t seed) {
  return std::make_unique<StickyActions>(std::move(env), prob, seed);
}

std::unique_ptr<Environment> make_builtin_env(const EnvConfig& config) {
  config.validate();
  return wrap_frame_skip(std::make_unique<ShooterGame>(config.height, config.width, config.rules),
                         config.frame_skip);
}

EnvStack::EnvStack(std::unique_ptr<Environment> base, double sticky_prob, int max_steps) {
  auto sticky = std::make_unique<StickyActions>(std::move(base), sticky_prob, 0);
  sticky_ = sticky.get();
  top_ = std::make_unique<StepLimit>(std::move(sticky), max_steps);
}

Frame EnvStack::begin_episode(std::uint64_t game_seed, std::uint64_t sticky_seed) {
  sticky_->reseed(sticky_seed);
  return top_->reset(game_seed);
}

}  // namespace scope
