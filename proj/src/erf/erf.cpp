#include "erfseg/erf/erf.hpp"

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

#include "erfseg/error.hpp"
#include "erfseg/nn/layers.hpp"
#include "erfseg/ops.hpp"

namespace erfseg {

ERFMap compute_erf(const ErfNetwork& net, const Shape& sample_shape, std::size_t n_samples, std::uint64_t seed) {
  if (sample_shape.size() != 3) throw ShapeError("ERF sample shape must be [C, H, W], got " + shape_str(sample_shape));
  if (n_samples == 0) throw ConfigError("ERF needs at least one sample");
  const std::size_t c = sample_shape[0], h = sample_shape[1], w = sample_shape[2];

  Tensor<double> x(Shape{n_samples, c, h, w});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : x.data()) v = normal(rng);
  x.set_requires_grad(true);

  Tape<double> tape;
  const Var<double> out = net(tape, tape.leaf(x));
  const Dims4 od = out.value().dims4();
  if (od.n != n_samples || od.c == 0 || od.h == 0 || od.w == 0) {
    throw ShapeError("ERF network produced an unusable output " + shape_str(out.shape()));
  }
  ERFMap map;
  map.center_row = od.h / 2;
  map.center_col = od.w / 2;
  map.n_samples = n_samples;
  map.seed = seed;
  if (od.h != h || od.w != w) {
    throw ShapeError("ERF analysis needs a resolution-preserving network; output " + shape_str(out.shape()));
  }

  Tensor<double> seed_grad(out.shape());
  for (std::size_t n = 0; n < n_samples; ++n) seed_grad.at(n, 0, map.center_row, map.center_col) = 1.0;
  tape.backward(out, seed_grad);

  map.grid = Tensor<double>(Shape{h, w});
  const auto g = x.grad();
  // Fixed accumulation order (sample, channel) keeps the map deterministic.
  for (std::size_t n = 0; n < n_samples; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * w; ++i) map.grid[i] += std::abs(g[(n * c + ch) * h * w + i]);
  for (auto& v : map.grid.data()) v /= static_cast<double>(n_samples);
  return map;
}

double erf_radius(const ERFMap& map, double mass_fraction) {
  if (!(mass_fraction > 0.0 && mass_fraction <= 1.0)) {
    throw std::invalid_argument("mass fraction must lie in (0, 1]");
  }
  if (map.grid.rank() != 2) throw ShapeError("ERF grid must be rank 2");
  const std::size_t h = map.grid.dim(0), w = map.grid.dim(1);
  double total = 0.0;
  for (double v : map.grid.data()) total += v;
  if (!(total > 0.0)) throw std::invalid_argument("ERF map has no mass");

  const long cr = static_cast<long>(map.center_row), cc = static_cast<long>(map.center_col);
  const long max_r = std::max({cr, cc, static_cast<long>(h) - 1 - cr, static_cast<long>(w) - 1 - cc});
  // Mass per Chebyshev ring, then the first radius whose cumulative mass
  // reaches the target.
  std::vector<double> ring(static_cast<std::size_t>(max_r) + 1, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const long d = std::max(std::abs(static_cast<long>(i) - cr), std::abs(static_cast<long>(j) - cc));
      ring[static_cast<std::size_t>(d)] += map.grid[i * w + j];
    }
  const double target = mass_fraction * total;
  double acc = 0.0;
  for (std::size_t r = 0; r < ring.size(); ++r) {
    acc += ring[r];
    if (acc >= target) return static_cast<double>(r);
  }
  return static_cast<double>(max_r);
}

namespace {
constexpr std::array<std::pair<ErfArch, std::string_view>, 3> kArchs{{
    {ErfArch::Plain, "plain"},
    {ErfArch::Dilated, "dilated"},
    {ErfArch::Residual, "residual"},
}};

std::string layer_name(std::size_t i) { return "stage" + std::to_string(i) + ".main.conv1"; }
}  // namespace

std::string_view arch_name(ErfArch a) {
  for (const auto& [k, n] : kArchs) {
    if (k == a) return n;
  }
  return "unknown";
}

ErfArch parse_arch(std::string_view name) {
  for (const auto& [k, n] : kArchs) {
    if (n == name) return k;
  }
  throw ConfigError("unknown ERF architecture '" + std::string(name) + "' (expected plain, dilated, residual)");
}

void ErfLabSpec::validate() const {
  if (depth < 1) throw ConfigError("ERF lab depth must be >= 1");
  if (dilation < 1) throw ConfigError("ERF lab dilation must be >= 1");
  if (channels < 1 || in_channels < 1) throw ConfigError("ERF lab channel counts must be >= 1");
  if (input_size != 0 && input_size < rf_extent()) {
    throw ConfigError("ERF lab input " + std::to_string(input_size) + " is smaller than the receptive field " +
                      std::to_string(rf_extent()));
  }
}

std::size_t ErfLabSpec::rf_extent() const { return 1 + depth * 2 * layer_dilation(); }

std::size_t ErfLabSpec::side() const {
  if (input_size != 0) return input_size;
  std::size_t s = std::max<std::size_t>(64, rf_extent() + 2);
  return s % 2 == 1 ? s : s + 1;
}

std::vector<ParamDecl> ErfLabSpec::param_decls() const {
  validate();
  std::vector<ParamDecl> decls;
  for (std::size_t i = 1; i <= depth; ++i) {
    const std::size_t cin = i == 1 ? in_channels : channels;
    declare(decls, ConvUnit{layer_name(i), ConvSpec::same(cin, channels, 3, 1, layer_dilation()), true, false, false});
  }
  return decls;
}

ErfNetwork ErfLabSpec::network(ParamStore<double>& params) const {
  validate();
  return [spec = *this, &params](Tape<double>& tape, Var<double> x) {
    ParamBinder<double> p(tape, params);
    for (std::size_t i = 1; i <= spec.depth; ++i) {
      const std::size_t cin = i == 1 ? spec.in_channels : spec.channels;
      const bool last = i == spec.depth;
      const ConvUnit unit{layer_name(i), ConvSpec::same(cin, spec.channels, 3, 1, spec.layer_dilation()), true, false,
                          !last};
      const Var<double> y = forward(p, unit, x);
      x = (spec.arch == ErfArch::Residual && i > 1) ? add(x, y) : y;
    }
    return x;
  };
}

ERFReport measure_erf(const ErfLabSpec& spec, std::size_t n_samples, std::uint64_t seed, double mass_fraction) {
  auto params = init_params<double>(spec.param_decls(), seed);
  params.set_requires_grad(false);
  const std::size_t s = spec.side();
  ERFReport r;
  r.spec = spec;
  r.seed = seed;
  // Decorrelate input draws from the weight draws of the same seed.
  r.map = compute_erf(spec.network(params), Shape{spec.in_channels, s, s}, n_samples, seed ^ 0x6a09e667f3bcc909ULL);
  r.map.seed = seed;
  r.rf_extent = spec.rf_extent();
  r.erf_radius = erf_radius(r.map, mass_fraction);
  r.ratio = (2.0 * r.erf_radius + 1.0) / static_cast<double>(r.rf_extent);
  return r;
}

ErfComparison compare_erf(const ErfLabSpec& a, const ErfLabSpec& b, std::size_t n_samples,
                          const std::vector<std::uint64_t>& seeds) {
  if (a.side() != b.side() || a.in_channels != b.in_channels) {
    throw ShapeError("ERF comparison needs equal geometry: " + std::to_string(a.side()) + " vs " +
                     std::to_string(b.side()));
  }
  if (seeds.empty()) throw ConfigError("ERF comparison needs at least one seed");
  ErfComparison cmp;
  cmp.seeds = seeds;
  for (auto seed : seeds) {
    cmp.a.push_back(measure_erf(a, n_samples, seed));
    cmp.b.push_back(measure_erf(b, n_samples, seed));
    cmp.mean_radius_a += cmp.a.back().erf_radius;
    cmp.mean_radius_b += cmp.b.back().erf_radius;
    cmp.mean_ratio_a += cmp.a.back().ratio;
    cmp.mean_ratio_b += cmp.b.back().ratio;
  }
  const double n = static_cast<double>(seeds.size());
  cmp.mean_radius_a /= n;
  cmp.mean_radius_b /= n;
  cmp.mean_ratio_a /= n;
  cmp.mean_ratio_b /= n;
  return cmp;
}

}  // namespace erfseg
