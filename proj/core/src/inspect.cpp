#include "scope/inspect.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "scope/error.hpp"
#include "scope/serialize.hpp"
#include "scope/stats.hpp"

namespace scope {
namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string_view next_token(std::string_view bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

int header_int(std::string_view bytes, std::size_t& pos, const char* what) {
  const std::string_view tok = next_token(bytes, pos);
  if (tok.empty() || tok.size() > 9 ||
      !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ConfigError(std::string("PGM header: bad ") + what);
  }
  return std::stoi(std::string(tok));
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace

Frame decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5") throw ConfigError("not a binary PGM (missing P5 magic)");
  const int width = header_int(bytes, pos, "width");
  const int height = header_int(bytes, pos, "height");
  const int maxval = header_int(bytes, pos, "maxval");
  if (width < 1 || height < 1) throw ConfigError("PGM has an empty image");
  if (maxval < 1 || maxval > 255) throw ConfigError("PGM maxval must lie in [1, 255]");
  if (pos >= bytes.size()) throw ConfigError("PGM ends after its header");
  ++pos;  // the single whitespace byte before the raster

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < count) throw ConfigError("PGM raster is truncated");
  const auto* raster = reinterpret_cast<const std::uint8_t*>(bytes.data() + pos);
  if (maxval == 255) return Frame::from_gray8(height, width, {raster, count});

  Matrix pixels(height, width);
  for (std::size_t i = 0; i < count; ++i) {
    if (raster[i] > maxval) throw ConfigError("PGM pixel exceeds maxval");
    pixels.data()[i] = static_cast<double>(raster[i]) / maxval;
  }
  return Frame::from_pixels(std::move(pixels));
}

std::string encode_pgm(const Frame& frame) {
  const std::vector<std::uint8_t> bytes = to_gray8(frame);
  std::string out = "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return out;
}

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream data;
  data << in.rdbuf();
  return decode_pgm(data.str());
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  write_file_atomic(path, encode_pgm(frame));
}

double InspectReport::truncated_fraction() const { return ratio(truncated_energy, total_energy); }
double InspectReport::sparse_fraction_of_truncated() const {
  return ratio(sparse_energy, truncated_energy);
}
double InspectReport::sparse_fraction_of_total() const { return ratio(sparse_energy, total_energy); }

InspectReport inspect_frame(const Frame& frame, int k, double p) {
  InspectReport r;
  r.full = dct2_full(frame);
  r.truncated = dct2_truncated(frame, k);
  r.sparse = sparsify(r.truncated, p);
  r.total_energy = energy(r.full);
  r.truncated_energy = energy(r.truncated.coeffs);
  r.sparse_energy = energy(r.sparse.block.coeffs);
  return r;
}

Frame builtin_frame_after(const EnvConfig& config, int steps) {
  if (steps < 0) throw InvalidArgument("step count must be non-negative");
  auto env = make_builtin_env(config);
  Frame frame = env->reset(config.seed);
  for (int i = 0; i < steps; ++i) {
    StepResult r = env->step(static_cast<int>(Action::Noop));
    frame = std::move(r.frame);
    if (r.terminated) break;
  }
  return frame;
}

std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string mask_csv(const BoolMatrix& mask) {
  std::string out;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (c) out += ',';
      out += mask(r, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

}  // namespace scope
