#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "field.hpp"

namespace s3p {

// Uniform grid; node (i,j,k) sits at origin + spacing*(i,j,k). Storage is x1 fastest.
struct GridSpec {
  std::array<int, 3> n{0, 0, 0};
  double spacing = 0;
  Vec3d origin{0, 0, 0};

  std::size_t count() const { return std::size_t(n[0]) * n[1] * n[2]; }
  std::size_t index(int i, int j, int k) const { return std::size_t(i) + std::size_t(n[0]) * (j + std::size_t(n[1]) * k); }
  Vec3d node(int i, int j, int k) const {
    return {origin[0] + spacing * i, origin[1] + spacing * j, origin[2] + spacing * k};
  }
  void validate() const {
    if (!(spacing > 0)) throw std::invalid_argument("grid spacing must be positive");
    for (int a = 0; a < 3; ++a)
      if (n[a] < 5) throw std::invalid_argument("grid needs at least 5 points per axis");
  }
};

// n points per axis covering [-R, R) with spacing 2R/n.
inline GridSpec cube_grid(double R, int n) {
  GridSpec g;
  g.n = {n, n, n};
  g.spacing = 2.0 * R / n;
  g.origin = {-R, -R, -R};
  g.validate();
  return g;
}

enum class GridDomain : char { spatial = 'X', frequency = 'K' };

struct GridData {
  GridSpec spec;
  GridDomain domain = GridDomain::spatial;
  std::vector<double> values;
};

inline void write_grid(const std::string& path, const GridData& g) {
  if (g.values.size() != g.spec.count()) throw std::invalid_argument("grid value count does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  unsigned char header[48] = {};
  header[0] = 'S';
  header[1] = '3';
  header[2] = 'G';
  header[3] = static_cast<unsigned char>(g.domain);
  for (int a = 0; a < 3; ++a) {
    std::uint32_t v = static_cast<std::uint32_t>(g.spec.n[a]);
    std::memcpy(header + 4 + 4 * a, &v, 4);
  }
  std::memcpy(header + 16, &g.spec.spacing, 8);
  std::memcpy(header + 24, g.spec.origin.data(), 24);
  out.write(reinterpret_cast<const char*>(header), 48);
  out.write(reinterpret_cast<const char*>(g.values.data()), std::streamsize(g.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline GridData read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  unsigned char header[48];
  in.read(reinterpret_cast<char*>(header), 48);
  if (!in || header[0] != 'S' || header[1] != '3' || header[2] != 'G')
    throw std::runtime_error("bad grid header in " + path);
  GridData g;
  if (header[3] != 'X' && header[3] != 'K') throw std::runtime_error("unknown grid domain in " + path);
  g.domain = static_cast<GridDomain>(header[3]);
  for (int a = 0; a < 3; ++a) {
    std::uint32_t v;
    std::memcpy(&v, header + 4 + 4 * a, 4);
    g.spec.n[a] = static_cast<int>(v);
  }
  std::memcpy(&g.spec.spacing, header + 16, 8);
  std::memcpy(g.spec.origin.data(), header + 24, 24);
  g.values.resize(g.spec.count());
  in.read(reinterpret_cast<char*>(g.values.data()), std::streamsize(g.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated grid data in " + path);
  return g;
}

namespace detail {

// 4th-order central stencils for derivative orders 0..4
struct Stencil {
  int half;
  std::array<double, 7> w;  // offsets -3..3
};

inline const Stencil& stencil(int order) {
  static const Stencil s[5] = {
      {0, {0, 0, 0, 1, 0, 0, 0}},
      {2, {0, 1.0 / 12, -8.0 / 12, 0, 8.0 / 12, -1.0 / 12, 0}},
      {2, {0, -1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12, 0}},
      {3, {1.0 / 8, -1.0, 13.0 / 8, 0, -13.0 / 8, 1.0, -1.0 / 8}},
      {3, {-1.0 / 6, 2.0, -39.0 / 6, 56.0 / 6, -39.0 / 6, 2.0, -1.0 / 6}},
  };
  return s[order];
}

inline constexpr int kGridMaxOrder = 4;

class GridSampler {
 public:
  explicit GridSampler(std::shared_ptr<const GridData> data) : data_(std::move(data)) {}

  std::array<int, 3> locate(const Vec3d& x) const {
    const auto& s = data_->spec;
    std::array<int, 3> idx;
    for (int a = 0; a < 3; ++a) {
      double u = (x[a] - s.origin[a]) / s.spacing;
      double r = std::round(u);
      if (std::abs(u - r) > 1e-7) throw std::domain_error("point outside valid region: not a grid node");
      idx[a] = static_cast<int>(r);
      if (idx[a] < 0 || idx[a] >= s.n[a]) throw std::domain_error("point outside valid region");
    }
    return idx;
  }

  double value(const Vec3d& x) const {
    auto i = locate(x);
    return data_->values[data_->spec.index(i[0], i[1], i[2])];
  }

  double partial(const std::array<int, 3>& idx, int a, int b, int c) const {
    const auto& s = data_->spec;
    const int ord[3] = {a, b, c};
    for (int ax = 0; ax < 3; ++ax) {
      int h = stencil(ord[ax]).half;
      if (idx[ax] - h < 0 || idx[ax] + h >= s.n[ax]) throw std::domain_error("point outside valid region: stencil margin");
    }
    const Stencil& sx = stencil(a);
    const Stencil& sy = stencil(b);
    const Stencil& sz = stencil(c);
    double acc = 0;
    for (int k = -sz.half; k <= sz.half; ++k) {
      double wz = sz.w[3 + k];
      if (wz == 0) continue;
      for (int j = -sy.half; j <= sy.half; ++j) {
        double wy = sy.w[3 + j];
        if (wy == 0) continue;
        for (int i = -sx.half; i <= sx.half; ++i) {
          double wx = sx.w[3 + i];
          if (wx == 0) continue;
          acc += wx * wy * wz * data_->values[s.index(idx[0] + i, idx[1] + j, idx[2] + k)];
        }
      }
    }
    return acc / std::pow(s.spacing, a + b + c);
  }

  template <int K>
  Jet<K> jet(const Vec3d& x) const {
    if constexpr (K > kGridMaxOrder) {
      throw std::domain_error("derivative order exceeds availability");
    } else {
      auto idx = locate(x);
      Jet<K> r;
      const auto& t = tables<K>;
      for (int n = 0; n < Jet<K>::size; ++n) {
        const auto& e = t.exps[n];
        r.c[n] = partial(idx, e[0], e[1], e[2]) / t.factorial[n];
      }
      return r;
    }
  }

 private:
  std::shared_ptr<const GridData> data_;
};

template <int K, class F>
auto grid_apply(const Point<K>& x, F&& at_base) {
  Vec3d b = base_of<K>(x);
  auto j = at_base(b);
  if (is_seed<K>(x)) return j;
  return compose(j, x);
}

}  // namespace detail

// Scalar field backed by grid samples; evaluation only at nodes.
inline ScalarField grid_scalar(std::shared_ptr<const GridData> data, double decay, std::string label = "grid") {
  data->spec.validate();
  FieldInfo info;
  info.decay = decay;
  info.max_order = detail::kGridMaxOrder;
  info.representation = Representation::grid;
  info.label = std::move(label);
  detail::GridSampler s(std::move(data));
  return make_scalar(
      [s](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) {
          return s.value(x);
        } else {
          constexpr int K = T::order;
          return detail::grid_apply<K>(x, [&](const Vec3d& b) { return s.template jet<K>(b); });
        }
      },
      info);
}

inline SymTensorField grid_tensor(const std::array<std::shared_ptr<const GridData>, 6>& comps, double decay,
                                  std::string label = "grid") {
  FieldInfo info;
  info.decay = decay;
  info.max_order = detail::kGridMaxOrder;
  info.representation = Representation::grid;
  info.label = std::move(label);
  std::array<detail::GridSampler, 6> s = {detail::GridSampler(comps[0]), detail::GridSampler(comps[1]),
                                          detail::GridSampler(comps[2]), detail::GridSampler(comps[3]),
                                          detail::GridSampler(comps[4]), detail::GridSampler(comps[5])};
  for (const auto& c : comps) c->spec.validate();
  return make_sym(
      [s](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        Sym3<T> r;
        if constexpr (std::is_same_v<T, double>) {
          for (int i = 0; i < 6; ++i) r.v[i] = s[i].value(x);
        } else {
          constexpr int K = T::order;
          for (int i = 0; i < 6; ++i)
            r.v[i] = detail::grid_apply<K>(x, [&](const Vec3d& b) { return s[i].template jet<K>(b); });
        }
        return r;
      },
      info);
}

inline std::shared_ptr<GridData> sample_scalar(const ScalarField& f, const GridSpec& spec) {
  spec.validate();
  auto g = std::make_shared<GridData>();
  g->spec = spec;
  g->values.resize(spec.count());
  for (int k = 0; k < spec.n[2]; ++k)
    for (int j = 0; j < spec.n[1]; ++j)
      for (int i = 0; i < spec.n[0]; ++i) g->values[spec.index(i, j, k)] = f(spec.node(i, j, k));
  return g;
}

inline std::array<std::shared_ptr<const GridData>, 6> sample_tensor(const SymTensorField& h, const GridSpec& spec) {
  spec.validate();
  std::array<std::shared_ptr<GridData>, 6> g;
  for (auto& c : g) {
    c = std::make_shared<GridData>();
    c->spec = spec;
    c->values.resize(spec.count());
  }
  for (int k = 0; k < spec.n[2]; ++k)
    for (int j = 0; j < spec.n[1]; ++j)
      for (int i = 0; i < spec.n[0]; ++i) {
        auto v = h(spec.node(i, j, k));
        for (int c = 0; c < 6; ++c) g[c]->values[spec.index(i, j, k)] = v.v[c];
      }
  return {g[0], g[1], g[2], g[3], g[4], g[5]};
}

inline ScalarField sampled(const ScalarField& f, const GridSpec& spec) {
  return grid_scalar(sample_scalar(f, spec), f.decay(), "grid(" + f.info().label + ")");
}

inline SymTensorField sampled(const SymTensorField& h, const GridSpec& spec) {
  return grid_tensor(sample_tensor(h, spec), h.decay(), "grid(" + h.info().label + ")");
}

}  // namespace s3p
