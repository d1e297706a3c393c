#pragma once

// Discrete product grid for the truncated time line [-L, L) times the unit
// circle: specs, complex-valued grid functions with the discrete L^2 norm,
// and their binary I/O (flat little-endian f64 pairs plus a JSON sidecar).

#include <complex>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "kglab/fft.hpp"
#include "kglab/model.hpp"

namespace kglab {

struct GridSpec {
  double L = 16.0;  // time domain [-L, L), uniform samples
  int n_t = 64;
  int n_x = 16;  // uniform samples on [0, 2 pi)
  // Boundary handling: the time line is truncated at +-L and realized on the
  // discrete torus; consumers keep boundary mass below 1e-6 by precondition,
  // so the seam carries no signal.

  void validate() const {
    auto pow2 = [](int n) { return n >= 16 && (n & (n - 1)) == 0; };
    if (!(L > 0.0)) throw std::invalid_argument("grid: L must be positive");
    if (!pow2(n_t))
      throw std::invalid_argument(
          "grid: n_t must be a power of two, at least 16");
    if (!pow2(n_x))
      throw std::invalid_argument(
          "grid: n_x must be a power of two, at least 16");
  }

  double dt() const { return 2.0 * L / n_t; }
  double dx() const { return kTwoPi / n_x; }
  double cell() const { return dt() * dx(); }
  double t_at(int i) const { return -L + i * dt(); }
  double x_at(int a) const { return a * dx(); }
};

struct GridFunction {
  GridSpec grid;
  std::vector<std::complex<double>> v;  // row-major, t outer, x inner

  GridFunction() = default;
  explicit GridFunction(const GridSpec& g)
      : grid(g), v(static_cast<std::size_t>(g.n_t) * g.n_x) {
    g.validate();
  }

  std::complex<double>& at(int it, int ix) {
    return v[static_cast<std::size_t>(it) * grid.n_x + ix];
  }
  const std::complex<double>& at(int it, int ix) const {
    return v[static_cast<std::size_t>(it) * grid.n_x + ix];
  }

  double norm() const {
    double acc = 0.0;
    for (const auto& z : v) acc += std::norm(z);
    return std::sqrt(acc * grid.cell());
  }
};

inline std::complex<double> inner(const GridFunction& a,
                                  const GridFunction& b) {
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t k = 0; k < a.v.size(); ++k)
    acc += std::conj(a.v[k]) * b.v[k];
  return acc * a.grid.cell();
}

// Flat binary of little-endian f64 interleaved (re, im), row-major (t outer,
// x inner), with a JSON sidecar {L, N_t, N_x, h}. This platform is
// little-endian; values are written in native order.
inline void write_grid_function(const GridFunction& f, double h,
                                const std::string& data_path,
                                const std::string& sidecar_path) {
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + data_path);
  for (const auto& z : f.v) {
    const double re = z.real(), im = z.imag();
    out.write(reinterpret_cast<const char*>(&re), sizeof(double));
    out.write(reinterpret_cast<const char*>(&im), sizeof(double));
  }
  out.close();
  nlohmann::ordered_json side;
  side["L"] = f.grid.L;
  side["N_t"] = f.grid.n_t;
  side["N_x"] = f.grid.n_x;
  side["h"] = h;
  std::ofstream js(sidecar_path);
  if (!js) throw std::runtime_error("cannot open " + sidecar_path);
  js << side.dump(2) << "\n";
}

inline std::pair<GridFunction, double> read_grid_function(
    const std::string& data_path, const std::string& sidecar_path) {
  std::ifstream js(sidecar_path);
  if (!js) throw std::runtime_error("cannot open " + sidecar_path);
  nlohmann::json side = nlohmann::json::parse(js);
  GridSpec g;
  g.L = side.at("L").get<double>();
  g.n_t = side.at("N_t").get<int>();
  g.n_x = side.at("N_x").get<int>();
  const double h = side.at("h").get<double>();
  GridFunction f(g);
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + data_path);
  for (auto& z : f.v) {
    double re = 0.0, im = 0.0;
    in.read(reinterpret_cast<char*>(&re), sizeof(double));
    in.read(reinterpret_cast<char*>(&im), sizeof(double));
    if (!in) throw std::runtime_error("short read from " + data_path);
    z = std::complex<double>(re, im);
  }
  return {std::move(f), h};
}

}  // namespace kglab
