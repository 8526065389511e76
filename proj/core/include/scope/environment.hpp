#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "scope/transform.hpp"

namespace scope {

/// The six-action fixed-shooter action set, in wire order.
enum class Action : int { Noop = 0, Fire = 1, Left = 2, Right = 3, LeftFire = 4, RightFire = 5 };

inline constexpr int kActionCount = 6;
inline constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "NOOP", "FIRE", "LEFT", "RIGHT", "LEFTFIRE", "RIGHTFIRE"};

struct StepResult {
  Frame frame;
  double reward = 0.0;
  bool terminated = false;
};

/// Reset/step interface shared by the built-in game, wrappers and remote
/// environments. Instances are single-threaded.
class Environment {
 public:
  virtual ~Environment() = default;

  /// Starts a new episode whose initial state depends only on `seed`.
  virtual Frame reset(std::uint64_t seed) = 0;

  /// Throws LifecycleError before reset or after termination, and
  /// InvalidArgument for an action outside [0, action_count()).
  virtual StepResult step(int action) = 0;

  /// step() for callers that throw the observation away (frame skipping).
  /// Implementations may leave the frame empty, except on the terminating
  /// step, which always carries the final frame.
  virtual StepResult advance(int action) { return step(action); }

  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual int action_count() const = 0;
};

/// Tunables of the built-in shooter. Defaults describe a 6 x 8 invader
/// formation on a 210 x 160 screen.
struct ShooterRules {
  int enemy_rows = 6;
  int enemy_cols = 8;
  int enemy_width = 8;
  int enemy_height = 6;
  int enemy_spacing_x = 14;
  int enemy_spacing_y = 12;
  int formation_top = 24;
  // Points per destroyed enemy, top row first. Must have enemy_rows entries.
  std::vector<int> row_scores = {30, 25, 20, 15, 10, 10};
  // Ticks between one-pixel marches with the full formation alive; the
  // interval shrinks in proportion to the surviving enemy count.
  int march_period = 4;
  int descent = 8;

  int player_width = 12;
  int player_height = 6;
  int player_bottom_margin = 14;
  int player_speed = 2;
  int lives = 3;

  int bullet_height = 4;
  int bullet_speed = 5;
  int enemy_bullet_height = 4;
  int enemy_bullet_speed = 2;
  int max_enemy_bullets = 3;
  int enemy_fire_per_mille = 40;  // chance per tick of a new enemy shot

  friend bool operator==(const ShooterRules&, const ShooterRules&) = default;
};

struct EnvConfig {
  int frame_skip = 4;
  double sticky_prob = 0.0;
  int max_steps = 10000;  // agent decisions per episode
  std::uint64_t seed = 0;
  int height = 210;
  int width = 160;
  ShooterRules rules;

  void validate() const;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

/// Deterministic fixed-shooter game. One step() is one emulation tick.
///
/// Invaders march sideways and drop at the screen edges, speeding up as
/// they thin out; the player slides along the bottom and has one shot in
/// flight at a time. The episode ends when an invader reaches the player's
/// row, the player has lost every life, or the formation is destroyed.
/// All randomness (starting offset, direction, enemy fire) comes from the
/// reset seed.
class ShooterGame final : public Environment {
 public:
  explicit ShooterGame(int height = 210, int width = 160, ShooterRules rules = {});

  Frame reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  StepResult advance(int action) override;

  int height() const override { return height_; }
  int width() const override { return width_; }
  int action_count() const override { return kActionCount; }

  int lives() const { return lives_; }
  int enemies_alive() const { return alive_count_; }
  std::uint64_t ticks() const { return ticks_; }
  /// Last rendered screen; stale after advance() on a non-terminal tick.
  const std::vector<std::uint8_t>& canvas() const { return canvas_; }

 private:
  struct Bullet {
    int x;
    int y;
  };

  int enemy_x(int col) const;
  int enemy_y(int row) const;
  bool alive(int row, int col) const;
  int march_interval() const;
  void march();
  void move_player_bullet(double& reward);
  void enemy_fire();
  void move_enemy_bullets();
  bool invaders_landed() const;
  double tick(int action);
  void render();
  std::uint64_t next_random();

  int height_;
  int width_;
  ShooterRules rules_;
  int player_top_;

  std::mt19937_64 rng_;
  std::vector<char> alive_;
  int alive_count_ = 0;
  int origin_x_ = 0;
  int origin_y_ = 0;
  int direction_ = 1;
  int march_counter_ = 0;
  int player_x_ = 0;
  int lives_ = 0;
  std::vector<Bullet> player_bullets_;
  std::vector<Bullet> enemy_bullets_;
  std::uint64_t ticks_ = 0;
  bool started_ = false;
  bool terminated_ = false;
  std::vector<std::uint8_t> canvas_;
};

/// Repeats each action `skip` times (stopping early on termination), sums the
/// rewards and returns the last frame.
class FrameSkip final : public Environment {
 public:
  FrameSkip(std::unique_ptr<Environment> inner, int skip);

  Frame reset(std::uint64_t seed) override { return inner_->reset(seed); }
  StepResult step(int action) override;

  int height() const override { return inner_->height(); }
  int width() const override { return inner_->width(); }
  int action_count() const override { return inner_->action_count(); }

 private:
  std::unique_ptr<Environment> inner_;
  int skip_;
};

/// Sticky actions: with probability `prob` the previously executed action
/// runs instead of the requested one. The first step after a reset always
/// executes the requested action. The coin flips come from a generator owned
/// by the wrapper, so the wrapped environment's own randomness is untouched.
class StickyActions final : public Environment {
 public:
  StickyActions(std::unique_ptr<Environment> inner, double prob, std::uint64_t seed);

  Frame reset(std::uint64_t seed) override;
  StepResult step(int action) override;

  int height() const override { return inner_->height(); }
  int width() const override { return inner_->width(); }
  int action_count() const override { return inner_->action_count(); }

  /// Restarts the sticky generator without touching the wrapped environment.
  void reseed(std::uint64_t seed);
  void set_probability(double prob);

  double probability() const { return prob_; }
  std::uint64_t draws() const { return draws_; }
  std::uint64_t repeats() const { return repeats_; }
  int last_executed() const { return previous_; }

 private:
  std::unique_ptr<Environment> inner_;
  double prob_;
  std::mt19937_64 rng_;
  int previous_ = -1;
  std::uint64_t draws_ = 0;
  std::uint64_t repeats_ = 0;
};

/// Ends the episode after `max_steps` steps.
class StepLimit final : public Environment {
 public:
  StepLimit(std::unique_ptr<Environment> inner, int max_steps);

  Frame reset(std::uint64_t seed) override;
  StepResult step(int action) override;

  int height() const override { return inner_->height(); }
  int width() const override { return inner_->width(); }
  int action_count() const override { return inner_->action_count(); }

  int steps() const { return steps_; }

 private:
  std::unique_ptr<Environment> inner_;
  int max_steps_;
  int steps_ = 0;
  bool terminated_ = true;
};

std::unique_ptr<Environment> wrap_frame_skip(std::unique_ptr<Environment> env, int skip);
std::unique_ptr<Environment> wrap_sticky(std::unique_ptr<Environment> env, double prob,
                                         std::uint64_t seed);

/// The built-in game at agent granularity: FrameSkip(ShooterGame). No sticky
/// actions and no step limit; see EnvStack for those.
std::unique_ptr<Environment> make_builtin_env(const EnvConfig& config);

/// StepLimit(StickyActions(base)) with direct access to the sticky layer so
/// one stack can be reused across episodes with fresh sticky seeds.
class EnvStack {
 public:
  EnvStack(std::unique_ptr<Environment> base, double sticky_prob, int max_steps);

  Environment& env() { return *top_; }
  StickyActions& sticky() { return *sticky_; }

  /// Re-seeds the sticky layer, then resets the game with `game_seed`.
  Frame begin_episode(std::uint64_t game_seed, std::uint64_t sticky_seed);

 private:
  StickyActions* sticky_;
  std::unique_ptr<Environment> top_;
};

}  // namespace scope
