#include "scope/serialize.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "scope/error.hpp"

namespace scope {
namespace json_detail {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known) throw ConfigError("unknown key \"" + it.key() + "\" in " + what);
  }
}

void throw_bad_value(const char* key, const std::string& detail) {
  throw ConfigError("bad value for \"" + std::string(key) + "\": " + detail);
}

}  // namespace json_detail

using json_detail::check_keys;
using json_detail::read;

namespace {

Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const Json& j, const char* key) {
  if (!j.is_array()) json_detail::throw_bad_value(key, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) json_detail::throw_bad_value(key, "expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

const Json& require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("missing key \"") + key + "\"");
  return *it;
}

Json dense_to_json(const Eigen::MatrixXd& m) { return to_json(Matrix(m)); }

Eigen::MatrixXd dense_from_json(const Json& j) {
  const Matrix rm = matrix_from_json(j);
  return Eigen::MatrixXd(rm);
}

}  // namespace

Json to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const Json& j) {
  check_keys(j, {"rows", "cols", "data"}, "matrix");
  Eigen::Index rows = -1;
  Eigen::Index cols = -1;
  read(j, "rows", rows);
  read(j, "cols", cols);
  const Eigen::VectorXd data = vector_from_json(require(j, "data"), "data");
  if (rows < 0 || cols < 0 || rows * cols != data.size()) {
    throw ConfigError("matrix data length does not match rows x cols");
  }
  // Row-major, matching to_json.
  Matrix m(rows, cols);
  std::copy(data.data(), data.data() + data.size(), m.data());
  return m;
}

Json to_json(const ShooterRules& r) {
  return {{"enemy_rows", r.enemy_rows},
          {"enemy_cols", r.enemy_cols},
          {"enemy_width", r.enemy_width},
          {"enemy_height", r.enemy_height},
          {"enemy_spacing_x", r.enemy_spacing_x},
          {"enemy_spacing_y", r.enemy_spacing_y},
          {"formation_top", r.formation_top},
          {"row_scores", r.row_scores},
          {"march_period", r.march_period},
          {"descent", r.descent},
          {"player_width", r.player_width},
          {"player_height", r.player_height},
          {"player_bottom_margin", r.player_bottom_margin},
          {"player_speed", r.player_speed},
          {"lives", r.lives},
          {"bullet_height", r.bullet_height},
          {"bullet_speed", r.bullet_speed},
          {"enemy_bullet_height", r.enemy_bullet_height},
          {"enemy_bullet_speed", r.enemy_bullet_speed},
          {"max_enemy_bullets", r.max_enemy_bullets},
          {"enemy_fire_per_mille", r.enemy_fire_per_mille}};
}

void apply_json(const Json& j, ShooterRules& r) {
  check_keys(j,
             {"enemy_rows", "enemy_cols", "enemy_width", "enemy_height", "enemy_spacing_x",
              "enemy_spacing_y", "formation_top", "row_scores", "march_period", "descent",
              "player_width", "player_height", "player_bottom_margin", "player_speed", "lives",
              "bullet_height", "bullet_speed", "enemy_bullet_height", "enemy_bullet_speed",
              "max_enemy_bullets", "enemy_fire_per_mille"},
             "rules");
  read(j, "enemy_rows", r.enemy_rows);
  read(j, "enemy_cols", r.enemy_cols);
  read(j, "enemy_width", r.enemy_width);
  read(j, "enemy_height", r.enemy_height);
  read(j, "enemy_spacing_x", r.enemy_spacing_x);
  read(j, "enemy_spacing_y", r.enemy_spacing_y);
  read(j, "formation_top", r.formation_top);
  read(j, "row_scores", r.row_scores);
  read(j, "march_period", r.march_period);
  read(j, "descent", r.descent);
  read(j, "player_width", r.player_width);
  read(j, "player_height", r.player_height);
  read(j, "player_bottom_margin", r.player_bottom_margin);
  read(j, "player_speed", r.player_speed);
  read(j, "lives", r.lives);
  read(j, "bullet_height", r.bullet_height);
  read(j, "bullet_speed", r.bullet_speed);
  read(j, "enemy_bullet_height", r.enemy_bullet_height);
  read(j, "enemy_bullet_speed", r.enemy_bullet_speed);
  read(j, "max_enemy_bullets", r.max_enemy_bullets);
  read(j, "enemy_fire_per_mille", r.enemy_fire_per_mille);
}

Json to_json(const EnvConfig& c) {
  return {{"frame_skip", c.frame_skip}, {"sticky_prob", c.sticky_prob},
          {"max_steps", c.max_steps},   {"seed", c.seed},
          {"height", c.height},         {"width", c.width},
          {"rules", to_json(c.rules)}};
}

void apply_json(const Json& j, EnvConfig& c) {
  check_keys(j, {"frame_skip", "sticky_prob", "max_steps", "seed", "height", "width", "rules"},
             "env");
  read(j, "frame_skip", c.frame_skip);
  read(j, "sticky_prob", c.sticky_prob);
  read(j, "max_steps", c.max_steps);
  read(j, "seed", c.seed);
  read(j, "height", c.height);
  read(j, "width", c.width);
  if (auto it = j.find("rules"); it != j.end()) apply_json(*it, c.rules);
}

Json to_json(const PolicyParams& params) {
  const Eigen::VectorXd flat = flatten(params);
  return {{"format", "scope-policy"},
          {"version", kPolicyFormatVersion},
          {"k", params.shape.k},
          {"m", params.shape.m},
          {"n", params.shape.n},
          {"include_bias", params.shape.include_bias},
          {"params", vector_to_json(flat)}};
}

PolicyParams policy_from_json(const Json& j) {
  check_keys(j, {"format", "version", "k", "m", "n", "include_bias", "params", "p"},
             "policy file");
  if (j.value("format", std::string()) != "scope-policy") {
    throw ConfigError("not a policy document (format must be \"scope-policy\")");
  }
  int version = 0;
  read(j, "version", version);
  if (version != kPolicyFormatVersion) {
    throw ConfigError("unsupported policy format version " + std::to_string(version));
  }
  PolicyShape shape;
  read(j, "k", shape.k);
  read(j, "m", shape.m);
  read(j, "n", shape.n);
  read(j, "include_bias", shape.include_bias);
  try {
    shape.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("policy file: ") + e.what());
  }
  const Eigen::VectorXd flat = vector_from_json(require(j, "params"), "params");
  if (!flat.allFinite()) throw ConfigError("policy file contains non-finite parameters");
  try {
    return unflatten(flat, shape);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("policy file: ") + e.what());
  }
}

Json to_json(const cma::CmaState& s) {
  std::ostringstream rng;
  rng << s.rng;
  const auto& c = s.constants;
  return {{"dimension", s.dimension},
          {"population", s.population},
          {"parents", s.parents},
          {"mean", vector_to_json(s.mean)},
          {"sigma", s.sigma},
          {"covariance", dense_to_json(s.covariance)},
          {"path_sigma", vector_to_json(s.path_sigma)},
          {"path_c", vector_to_json(s.path_c)},
          {"weights", vector_to_json(s.weights)},
          {"generation", s.generation},
          {"rng", rng.str()},
          {"constants",
           {{"mu_eff", c.mu_eff},
            {"c_sigma", c.c_sigma},
            {"d_sigma", c.d_sigma},
            {"c_c", c.c_c},
            {"c1", c.c1},
            {"c_mu", c.c_mu},
            {"chi_n", c.chi_n},
            {"eigen_interval", c.eigen_interval}}},
          {"eigen_basis", dense_to_json(s.eigen_basis)},
          {"axis_lengths", vector_to_json(s.axis_lengths)},
          {"eigen_generation", s.eigen_generation}};
}

cma::CmaState cma_state_from_json(const Json& j) {
  check_keys(j,
             {"dimension", "population", "parents", "mean", "sigma", "covariance", "path_sigma",
              "path_c", "weights", "generation", "rng", "constants", "eigen_basis",
              "axis_lengths", "eigen_generation"},
             "optimizer state");
  cma::CmaState s;
  read(j, "dimension", s.dimension);
  read(j, "population", s.population);
  read(j, "parents", s.parents);
  s.mean = vector_from_json(require(j, "mean"), "mean");
  read(j, "sigma", s.sigma);
  s.covariance = dense_from_json(require(j, "covariance"));
  s.path_sigma = vector_from_json(require(j, "path_sigma"), "path_sigma");
  s.path_c = vector_from_json(require(j, "path_c"), "path_c");
  s.weights = vector_from_json(require(j, "weights"), "weights");
  read(j, "generation", s.generation);

  const Json& rng_text = require(j, "rng");
  if (!rng_text.is_string()) json_detail::throw_bad_value("rng", "expected a string");
  std::istringstream rng(rng_text.get<std::string>());
  rng >> s.rng;
  if (rng.fail()) throw ConfigError("optimizer state has a corrupt generator state");

  const Json& c = require(j, "constants");
  check_keys(c, {"mu_eff", "c_sigma", "d_sigma", "c_c", "c1", "c_mu", "chi_n", "eigen_interval"},
             "optimizer constants");
  read(c, "mu_eff", s.constants.mu_eff);
  read(c, "c_sigma", s.constants.c_sigma);
  read(c, "d_sigma", s.constants.d_sigma);
  read(c, "c_c", s.constants.c_c);
  read(c, "c1", s.constants.c1);
  read(c, "c_mu", s.constants.c_mu);
  read(c, "chi_n", s.constants.chi_n);
  read(c, "eigen_interval", s.constants.eigen_interval);

  s.eigen_basis = dense_from_json(require(j, "eigen_basis"));
  s.axis_lengths = vector_from_json(require(j, "axis_lengths"), "axis_lengths");
  read(j, "eigen_generation", s.eigen_generation);

  const auto d = static_cast<Eigen::Index>(s.dimension);
  if (d == 0 || s.mean.size() != d || s.covariance.rows() != d || s.covariance.cols() != d ||
      s.path_sigma.size() != d || s.path_c.size() != d || s.eigen_basis.rows() != d ||
      s.eigen_basis.cols() != d || s.axis_lengths.size() != d ||
      s.weights.size() != static_cast<Eigen::Index>(s.parents) || s.parents > s.population) {
    throw ConfigError("optimizer state has inconsistent dimensions");
  }
  if (!(s.sigma > 0.0)) throw ConfigError("optimizer state has a non-positive sigma");
  cma::rebuild_inverse_sqrt(s);
  return s;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) throw FileError("cannot read " + path.string());
  try {
    return Json::parse(text.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw FileError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 std::optional<double> p) {
  Json j = to_json(params);
  if (p) j["p"] = *p;
  write_file_atomic(path, j.dump(2) + "\n");
}

PolicyFile load_policy(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  PolicyFile file{policy_from_json(j), std::nullopt};
  if (j.contains("p")) {
    double p = 0.0;
    read(j, "p", p);
    file.p = p;
  }
  return file;
}

}  // namespace scope
