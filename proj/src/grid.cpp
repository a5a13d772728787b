#include "mslab/grid.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mslab {

ScalarGrid::ScalarGrid(const std::array<int, 3>& d, double h, const Vec3& o, double fill)
    : dims(d), spacing(h), origin(o) {
  if (d[0] < 2 || d[1] < 2 || d[2] < 2) throw std::invalid_argument("ScalarGrid: each dimension must be >= 2");
  if (!(h > 0.0)) throw std::invalid_argument("ScalarGrid: spacing must be positive");
  values.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill);
}

ScalarGrid ScalarGrid::unit_cube(int n, double fill) {
  const double h = 1.0 / n;
  return ScalarGrid({n, n, n}, h, Vec3::Constant(0.5 * h), fill);
}

bool ScalarGrid::contains_ball(const Ball& B) const {
  const Vec3 lo = lower(), hi = upper();
  const double tol = 1e-12;
  for (int a = 0; a < 3; ++a)
    if (B.center[a] - B.radius < lo[a] - tol || B.center[a] + B.radius > hi[a] + tol) return false;
  return true;
}

double ScalarGrid::min() const { return *std::min_element(values.begin(), values.end()); }
double ScalarGrid::max() const { return *std::max_element(values.begin(), values.end()); }
double ScalarGrid::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

void ScalarGrid::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw std::invalid_argument("ScalarGrid: each dimension must be >= 2");
  if (!(spacing > 0.0)) throw std::invalid_argument("ScalarGrid: spacing must be positive");
  if (values.size() != static_cast<std::size_t>(dims[0]) * dims[1] * dims[2])
    throw std::invalid_argument("ScalarGrid: value count does not match dims");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("ScalarGrid: non-finite value");
}

namespace {



void put_le(std::ofstream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  os.write(reinterpret_cast<const char*>(&bits), 8);
}

}  // namespace

void write_grid(const ScalarGrid& g, const std::string& stem) {
  g.validate();
  {
    std::ofstream os(stem + ".bin", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + stem + ".bin");
    for (double v : g.values) put_le(os, v);
  }
  nlohmann::json side{{"dims", g.dims},
                      {"spacing", g.spacing},
                      {"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
                      {"dtype", "f64le"},
                      {"order", "x-fastest"}};
  std::ofstream js(stem + ".json");
  if (!js) throw std::runtime_error("cannot write " + stem + ".json");
  js << side.dump(2) << '\n';
}

ScalarGrid read_grid(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw std::runtime_error("missing grid sidecar " + stem + ".json");
  const nlohmann::json side = nlohmann::json::parse(js);
  const auto dims = side.at("dims").get<std::array<int, 3>>();
  const auto o = side.at("origin").get<std::vector<double>>();
  if (o.size() != 3) throw std::runtime_error("grid sidecar: origin needs 3 entries");
  ScalarGrid g(dims, side.at("spacing").get<double>(), Vec3(o[0], o[1], o[2]));
  std::ifstream is(stem + ".bin", std::ios::binary);
  if (!is) throw std::runtime_error("missing grid data " + stem + ".bin");
  for (double& v : g.values) {
    std::uint64_t bits;
    if (!is.read(reinterpret_cast<char*>(&bits), 8)) throw std::runtime_error("grid data truncated: " + stem + ".bin");
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(&v, &bits, 8);
  }
  g.validate();
  return g;
}

}  // namespace mslab
