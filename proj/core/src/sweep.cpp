#include "scope/sweep.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "scope/error.hpp"
#include "scope/seeds.hpp"
#include "scope/stats.hpp"

namespace scope {

using json_detail::check_keys;
using json_detail::read;

void SweepGrid::validate(int height, int width) const {
  if (k_values.empty() || p_values.empty()) throw ConfigError("sweep grid has no cells");
  const int limit = std::min(height, width);
  for (int k : k_values) {
    if (k < 1 || k >= limit) {
      throw ConfigError("sweep k=" + std::to_string(k) + " must lie in [1, " +
                        std::to_string(limit) + ")");
    }
  }
  for (double p : p_values) {
    if (!(p >= 0.0 && p < 100.0)) throw ConfigError("sweep p values must lie in [0, 100)");
  }
  if (std::set<int>(k_values.begin(), k_values.end()).size() != k_values.size() ||
      std::set<double>(p_values.begin(), p_values.end()).size() != p_values.size()) {
    throw ConfigError("sweep grid has duplicate k or p values");
  }
  if (trials_per_cell < 1) throw ConfigError("trials_per_cell must be >= 1");
  if (generations_per_trial < 1) throw ConfigError("generations_per_trial must be >= 1");
}

Json to_json(const SweepGrid& g) {
  return {{"k_values", g.k_values},
          {"p_values", g.p_values},
          {"trials_per_cell", g.trials_per_cell},
          {"generations_per_trial", g.generations_per_trial},
          {"master_seed", g.master_seed}};
}

void apply_json(const Json& j, SweepGrid& g) {
  check_keys(j, {"k_values", "p_values", "trials_per_cell", "generations_per_trial", "master_seed"},
             "sweep grid");
  read(j, "k_values", g.k_values);
  read(j, "p_values", g.p_values);
  read(j, "trials_per_cell", g.trials_per_cell);
  read(j, "generations_per_trial", g.generations_per_trial);
  read(j, "master_seed", g.master_seed);
}

std::vector<std::pair<int, double>> table2_shortlist() {
  return {{50, 0.95}, {75, 0.25}, {125, 10.0}, {125, 25.0}, {150, 0.9}, {150, 10.0}};
}

std::uint64_t trial_seed(std::uint64_t master_seed, int k, double p, std::size_t trial) {
  const std::uint64_t cell =
      derive_seed(derive_seed(derive_seed(master_seed, kTrialStream), static_cast<std::uint64_t>(k)),
                  std::bit_cast<std::uint64_t>(p));
  return derive_seed(cell, trial);
}

std::vector<double> SweepCell::scores() const {
  std::vector<double> out;
  for (const auto& t : trials) {
    if (t.score) out.push_back(*t.score);
  }
  return out;
}

std::optional<CellStats> cell_stats(const SweepCell& cell) {
  const std::vector<double> scores = cell.scores();
  if (scores.empty()) return std::nullopt;
  const Summary s = aggregate(scores);
  CellStats c;
  c.trials = scores.size();
  c.mean = s.mean;
  c.std = s.std;
  c.min = s.min;
  c.max = s.best;
  c.p25 = nearest_rank(scores, 25.0);
  c.p75 = nearest_rank(scores, 75.0);
  return c;
}

namespace {

std::filesystem::path cell_file(const std::filesystem::path& dir, int k, double p) {
  return dir / ("cell_k" + std::to_string(k) + "_p" + format_double(p) + ".json");
}

Json cell_identity(const SweepGrid& grid, const TrainConfig& base) {
  Json config = to_json(base);
  config.erase("k");
  config.erase("p");
  config.erase("generations");
  config.erase("master_seed");
  config.erase("parallelism");
  config.erase("checkpoint_every");
  return {{"trials_per_cell", grid.trials_per_cell},
          {"generations_per_trial", grid.generations_per_trial},
          {"master_seed", grid.master_seed},
          {"base", config}};
}

Json cell_json(const SweepCell& cell, const Json& identity) {
  Json trials = Json::array();
  for (const auto& t : cell.trials) {
    trials.push_back({{"trial", t.trial},
                      {"score", t.score ? Json(*t.score) : Json()},
                      {"error", t.error}});
  }
  return {{"k", cell.k}, {"p", cell.p}, {"identity", identity}, {"trials", trials}};
}

std::optional<SweepCell> load_cell(const std::filesystem::path& path, int k, double p,
                                   const Json& identity) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const Json j = read_json_file(path);
    if (j.at("k") != k || j.at("p").get<double>() != p || j.at("identity") != identity) {
      return std::nullopt;
    }
    SweepCell cell{k, p, {}};
    for (const auto& t : j.at("trials")) {
      TrialResult r;
      r.trial = t.at("trial").get<std::size_t>();
      if (!t.at("score").is_null()) r.score = t.at("score").get<double>();
      r.error = t.at("error").get<std::string>();
      cell.trials.push_back(r);
    }
    return cell;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable leftovers are recomputed
  }
}

}  // namespace

std::vector<SweepCell> run_sweep(const SweepGrid& grid, const TrainConfig& base,
                                 const SweepOptions& options) {
  grid.validate(base.env.height, base.env.width);
  std::vector<int> ks = grid.k_values;
  std::vector<double> ps = grid.p_values;
  std::sort(ks.begin(), ks.end());
  std::sort(ps.begin(), ps.end());

  const Json identity = cell_identity(grid, base);
  if (!options.state_dir.empty()) std::filesystem::create_directories(options.state_dir);

  std::vector<SweepCell> cells;
  for (int k : ks) {
    for (double p : ps) {
      const auto path = options.state_dir.empty() ? std::filesystem::path()
                                                  : cell_file(options.state_dir, k, p);
      std::optional<SweepCell> cached =
          path.empty() ? std::nullopt : load_cell(path, k, p, identity);
      if (cached) {
        cells.push_back(std::move(*cached));
        if (options.on_cell) options.on_cell(cells.back());
        continue;
      }

      SweepCell cell{k, p, {}};
      for (std::size_t t = 0; t < grid.trials_per_cell; ++t) {
        TrialResult trial{t, std::nullopt, {}};
        TrainConfig cfg = base;
        cfg.k = k;
        cfg.p = p;
        cfg.generations = grid.generations_per_trial;
        cfg.master_seed = trial_seed(grid.master_seed, k, p, t);
        try {
          TrainOptions topt;
          topt.factory = options.factory;
          const TrainResult result = train(cfg, topt);
          if (result.history.empty()) throw EvaluationError("trial finished without a generation");
          trial.score = result.best_fitness;
          if (options.on_trial) options.on_trial(k, p, t, result);
        } catch (const std::exception& e) {
          trial.error = e.what();
        }
        cell.trials.push_back(std::move(trial));
      }
      if (!path.empty()) write_file_atomic(path, cell_json(cell, identity).dump(2) + "\n");
      cells.push_back(std::move(cell));
      if (options.on_cell) options.on_cell(cells.back());
    }
  }
  return cells;
}

void export_heatmap(const std::vector<SweepCell>& cells, const std::filesystem::path& path) {
  if (cells.empty()) throw InvalidArgument("no sweep cells to export");
  std::vector<const SweepCell*> sorted;
  for (const auto& c : cells) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SweepCell* a, const SweepCell* b) {
    return std::pair(a->k, a->p) < std::pair(b->k, b->p);
  });

  std::string out = "k,p,trials,mean,std,min,p25,p75,max\n";
  for (const SweepCell* c : sorted) {
    out += std::to_string(c->k) + "," + format_double(c->p) + ",";
    if (const auto s = cell_stats(*c)) {
      out += std::to_string(s->trials) + "," + format_double(s->mean) + "," +
             format_double(s->std) + "," + format_double(s->min) + "," + format_double(s->p25) +
             "," + format_double(s->p75) + "," + format_double(s->max) + "\n";
    } else {
      out += "0,,,,,,\n";
    }
  }
  write_file_atomic(path, out);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
T parse_number(const std::string& text, const std::filesystem::path& path) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(path.string() + ": cannot parse \"" + text + "\" as a number");
  }
  return value;
}

}  // namespace

std::vector<HeatmapRow> load_heatmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "k,p,trials,mean,std,min,p25,p75,max") {
    throw ConfigError(path.string() + " does not have the heatmap header");
  }
  std::vector<HeatmapRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw ConfigError(path.string() + ": malformed row \"" + line + "\"");
    HeatmapRow row;
    row.k = parse_number<int>(f[0], path);
    row.p = parse_number<double>(f[1], path);
    const auto trials = parse_number<std::size_t>(f[2], path);
    if (trials > 0) {
      row.stats = CellStats{trials,
                            parse_number<double>(f[3], path),
                            parse_number<double>(f[4], path),
                            parse_number<double>(f[5], path),
                            parse_number<double>(f[6], path),
                            parse_number<double>(f[7], path),
                            parse_number<double>(f[8], path)};
    }
    rows.push_back(row);
  }
  return rows;
}

void export_raw_scores(const std::vector<SweepCell>& cells, const std::filesystem::path& path) {
  std::string out = "k,p,trial,score\n";
  for (const auto& c : cells) {
    for (const auto& t : c.trials) {
      out += std::to_string(c.k) + "," + format_double(c.p) + "," + std::to_string(t.trial) + "," +
             (t.score ? format_double(*t.score) : std::string()) + "\n";
    }
  }
  write_file_atomic(path, out);
}

}  // namespace scope
