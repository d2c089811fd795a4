#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/error.hpp"

namespace aggdiff {

/// Thrown for unreadable or malformed files.
class FormatError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError(what + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw FormatError(what + ": '" + s + "' is not a number");
  return v;
}

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) throw FormatError(what + ": '" + s + "' is not a count");
  return static_cast<std::size_t>(v);
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

// "# agdiff-density v1 d=2 dx=... nx=... ny=..." -> key/value map.
inline std::map<std::string, std::string> parse_density_header(const std::string& line) {
  std::istringstream is(line);
  std::string hash, tag, version;
  is >> hash >> tag >> version;
  if (hash != "#" || tag != "agdiff-density" || version != "v1")
    throw FormatError("density file: missing '# agdiff-density v1' header");
  std::map<std::string, std::string> kv;
  std::string item;
  while (is >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("density file: bad header item '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  for (const char* k : {"d", "dx", "nx", "ny"})
    if (!kv.count(k)) throw FormatError(std::string("density file: header lacks '") + k + "'");
  return kv;
}

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError("binary density: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Density files

/// CSV: header line, then one `x,y,value` row per cell (cell centers, row-major).
inline void write_density_csv(std::ostream& os, const Density2D& rho) {
  os << "# agdiff-density v1 d=2 dx=" << detail::format_double(rho.dx()) << " nx=" << rho.nx() << " ny=" << rho.ny()
     << '\n';
  for (std::size_t j = 0; j < rho.ny(); ++j)
    for (std::size_t i = 0; i < rho.nx(); ++i)
      os << detail::format_double(rho.x(i)) << ',' << detail::format_double(rho.y(j)) << ','
         << detail::format_double(rho(i, j)) << '\n';
}

inline Density2D read_density_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("density file: empty input");
  const auto kv = detail::parse_density_header(line);
  if (kv.at("d") != "2") throw FormatError("density file: only d=2 grids can be read as a 2D density");
  const double dx = detail::parse_double(kv.at("dx"), "dx");
  const std::size_t nx = detail::parse_count(kv.at("nx"), "nx"), ny = detail::parse_count(kv.at("ny"), "ny");
  if (!(dx > 0.0) || nx == 0 || ny == 0) throw FormatError("density file: empty or degenerate grid");
  std::vector<std::array<double, 3>> rows;
  rows.reserve(nx * ny);
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::array<double, 3> r{};
    std::istringstream ls(line);
    std::string cell;
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(ls, cell, ',')) throw FormatError("density file: row '" + line + "' needs x,y,value");
      r[c] = detail::parse_double(detail::trim(cell), "density file");
    }
    rows.push_back(r);
  }
  if (rows.size() != nx * ny) throw FormatError("density file: row count does not match nx*ny");
  double xmin = rows[0][0], ymin = rows[0][1];
  for (const auto& r : rows) {
    xmin = std::min(xmin, r[0]);
    ymin = std::min(ymin, r[1]);
  }
  Density2D rho(nx, ny, dx, xmin - 0.5 * dx, ymin - 0.5 * dx);
  std::vector<char> seen(nx * ny, 0);
  for (const auto& r : rows) {
    const double fi = (r[0] - xmin) / dx, fj = (r[1] - ymin) / dx;
    const long i = std::lround(fi), j = std::lround(fj);
    if (i < 0 || j < 0 || i >= static_cast<long>(nx) || j >= static_cast<long>(ny) || std::abs(fi - i) > 1e-6 ||
        std::abs(fj - j) > 1e-6)
      throw FormatError("density file: a row does not sit on a cell center");
    const std::size_t k = static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i);
    if (seen[k]++) throw FormatError("density file: duplicate cell");
    rho(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = r[2];
  }
  rho.validate();
  return rho;
}

/// Binary: "AGD1", little-endian u32 d, nx, ny, f64 dx, d f64 origin
/// coordinates, then nx*ny row-major f64 values.
inline void write_density_binary(std::ostream& os, const Density2D& rho) {
  os.write("AGD1", 4);
  detail::put_le<std::uint32_t>(os, 2);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rho.nx()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rho.ny()));
  detail::put_le<double>(os, rho.dx());
  detail::put_le<double>(os, rho.x0());
  detail::put_le<double>(os, rho.y0());
  for (double v : rho.values()) detail::put_le<double>(os, v);
}

inline Density2D read_density_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AGD1", 4) != 0) throw FormatError("binary density: bad magic");
  const auto d = detail::get_le<std::uint32_t>(is);
  const auto nx = detail::get_le<std::uint32_t>(is);
  const auto ny = detail::get_le<std::uint32_t>(is);
  if (d != 2) throw FormatError("binary density: only d=2 grids can be read as a 2D density");
  const double dx = detail::get_le<double>(is);
  const double x0 = detail::get_le<double>(is), y0 = detail::get_le<double>(is);
  if (nx == 0 || ny == 0 || !(dx > 0.0)) throw FormatError("binary density: empty or degenerate grid");
  Density2D rho(nx, ny, dx, x0, y0);
  for (double& v : rho.mutable_values()) v = detail::get_le<double>(is);
  rho.validate();
  return rho;
}

inline bool is_binary_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  return ext == ".bin" || ext == ".agd";
}

/// Writes CSV or, for .bin/.agd paths, the binary format.
inline void save_density(const std::string& path, const Density2D& rho) {
  const bool bin = is_binary_path(path);
  auto os = detail::open_out(path, bin);
  bin ? write_density_binary(os, rho) : write_density_csv(os, rho);
  if (!os) throw FormatError("write to '" + path + "' failed");
}

/// Reads either format, recognized by the leading magic bytes.
inline Density2D load_density(const std::string& path) {
  auto is = detail::open_in(path, true);
  char magic[4] = {};
  is.read(magic, 4);
  const bool bin = is.gcount() == 4 && std::memcmp(magic, "AGD1", 4) == 0;
  is.clear();
  is.seekg(0);
  return bin ? read_density_binary(is) : read_density_csv(is);
}

/// Radial profiles use the CSV layout with ny=1: rows `r,0,value` at shell
/// centers, d the ambient dimension and dx the shell width.
inline void write_radial_csv(std::ostream& os, const RadialDensity& rho) {
  os << "# agdiff-density v1 d=" << rho.dimension() << " dx=" << detail::format_double(rho.dr()) << " nx=" << rho.size()
     << " ny=1\n";
  for (std::size_t i = 0; i < rho.size(); ++i)
    os << detail::format_double(rho.radius(i)) << ",0," << detail::format_double(rho[i]) << '\n';
}

inline RadialDensity read_radial_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("radial file: empty input");
  const auto kv = detail::parse_density_header(line);
  const int d = static_cast<int>(detail::parse_count(kv.at("d"), "d"));
  const double dr = detail::parse_double(kv.at("dx"), "dx");
  const std::size_t n = detail::parse_count(kv.at("nx"), "nx");
  if (kv.at("ny") != "1") throw FormatError("radial file: ny must be 1");
  std::vector<double> v(n, 0.0);
  std::size_t count = 0;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
      throw FormatError("radial file: row '" + line + "' needs r,0,value");
    const double r = detail::parse_double(detail::trim(a), "radial file");
    const double fi = r / dr - 0.5;
    const long i = std::lround(fi);
    if (i < 0 || i >= static_cast<long>(n) || std::abs(fi - i) > 1e-6) throw FormatError("radial file: row off the shell centers");
    v[static_cast<std::size_t>(i)] = detail::parse_double(detail::trim(c), "radial file");
    ++count;
  }
  if (count != n) throw FormatError("radial file: row count does not match nx");
  return RadialDensity(d, dr, std::move(v));
}

// ---------------------------------------------------------------------------
// Flat key=value configuration

using FlatConfig = std::map<std::string, std::string>;

/// Lines `key=value` with dotted keys; '#' starts a comment line. Duplicate
/// keys and lines without '=' are errors.
inline FlatConfig parse_flat_config(std::istream& is) {
  FlatConfig out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) throw FormatError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

inline FlatConfig load_flat_config(const std::string& path) {
  auto is = detail::open_in(path);
  return parse_flat_config(is);
}

inline void write_flat_config(std::ostream& os, const FlatConfig& cfg) {
  for (const auto& [k, v] : cfg) os << k << '=' << v << '\n';
}

// ---------------------------------------------------------------------------
// Hashing and manifests

/// 64-bit FNV-1a of a byte string.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string hash_file(const std::string& path) {
  auto is = detail::open_in(path, true);
  std::ostringstream buf;
  buf << is.rdbuf();
  return hex64(fnv1a(buf.str()));
}

struct RunManifest {
  std::string command;
  FlatConfig config;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
  double wall_seconds = 0.0;
  std::string version;

  void add_input(const std::string& path) { inputs.emplace_back(path, hash_file(path)); }
  void add_output(const std::string& path) { outputs.emplace_back(path, hash_file(path)); }

  /// Flat key=value text: command, version, wall clock, config.*, input.N.*, output.N.*.
  void write(std::ostream& os) const {
    os << "command=" << command << '\n' << "version=" << version << '\n';
    os << "wall_seconds=" << detail::format_double(wall_seconds) << '\n';
    for (const auto& [k, v] : config) os << "config." << k << '=' << v << '\n';
    for (std::size_t i = 0; i < inputs.size(); ++i)
      os << "input." << i << ".path=" << inputs[i].first << '\n' << "input." << i << ".fnv1a=" << inputs[i].second << '\n';
    for (std::size_t i = 0; i < outputs.size(); ++i)
      os << "output." << i << ".path=" << outputs[i].first << '\n' << "output." << i << ".fnv1a=" << outputs[i].second << '\n';
  }

  void save(const std::string& path) const {
    auto os = detail::open_out(path);
    write(os);
  }
};

}  // namespace aggdiff
