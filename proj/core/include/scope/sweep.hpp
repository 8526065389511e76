#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scope/serialize.hpp"
#include "scope/trainer.hpp"

namespace scope {

/// Grid of (k, p) cells, each trained `trials_per_cell` times from scratch.
struct SweepGrid {
  std::vector<int> k_values = {50, 75, 100, 125, 150};
  std::vector<double> p_values = {0.25, 0.9, 0.95, 5.0, 10.0, 25.0};
  std::size_t trials_per_cell = 5;
  std::uint64_t generations_per_trial = 50;
  std::uint64_t master_seed = 0;

  /// Every k must be below min(height, width); every p in [0, 100).
  void validate(int height, int width) const;
  std::size_t cell_count() const { return k_values.size() * p_values.size(); }
};

Json to_json(const SweepGrid& grid);
void apply_json(const Json& j, SweepGrid& grid);

/// The six (k, p) pairs of the long-run results table.
std::vector<std::pair<int, double>> table2_shortlist();

/// Master seed of one trial. Depends only on (master_seed, k, p, trial), so
/// cells do not influence each other.
std::uint64_t trial_seed(std::uint64_t master_seed, int k, double p, std::size_t trial);

struct TrialResult {
  std::size_t trial = 0;
  std::optional<double> score;  // best training score; empty if the run failed
  std::string error;
};

struct SweepCell {
  int k = 0;
  double p = 0.0;
  std::vector<TrialResult> trials;

  /// Scores of the successful trials, in trial order.
  std::vector<double> scores() const;
  /// False when every trial failed.
  bool valid() const { return !scores().empty(); }
};

struct CellStats {
  std::size_t trials = 0;  // successful trials
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double p25 = 0.0;  // nearest rank
  double p75 = 0.0;
  double max = 0.0;

  friend bool operator==(const CellStats&, const CellStats&) = default;
};

/// Nullopt for an invalid cell.
std::optional<CellStats> cell_stats(const SweepCell& cell);

struct SweepOptions {
  /// Finished cells are stored here and skipped when the sweep is rerun.
  std::filesystem::path state_dir;
  EnvFactory factory;  // overrides base.factory()
  std::function<void(const SweepCell&)> on_cell;
  std::function<void(int k, double p, std::size_t trial, const TrainResult&)> on_trial;
};

/// Cells in (k, p) order. A failing trial is recorded and the sweep goes on.
std::vector<SweepCell> run_sweep(const SweepGrid& grid, const TrainConfig& base,
                                 const SweepOptions& options = {});

/// Header k,p,trials,mean,std,min,p25,p75,max; one row per cell sorted by
/// (k, p). Invalid cells have trials = 0 and empty statistics.
void export_heatmap(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

struct HeatmapRow {
  int k = 0;
  double p = 0.0;
  std::optional<CellStats> stats;
};

std::vector<HeatmapRow> load_heatmap(const std::filesystem::path& path);

/// Header k,p,trial,score; failed trials have an empty score.
void export_raw_scores(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

}  // namespace scope
