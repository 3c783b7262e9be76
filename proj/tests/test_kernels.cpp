#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "traitgeo/kernels.hpp"

using namespace traitgeo::kernels;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<const KernelTable*> variant_tables() {
  std::vector<const KernelTable*> out;
  for (Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (const KernelTable* t = table_for(isa)) out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("scalar kernels match textbook loops") {
  const auto x = gaussian(37, 1), y0 = gaussian(37, 2);
  double ref = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ref += x[i] * y0[i];
  CHECK(scalar_table().dot(x.data(), y0.data(), x.size()) == doctest::Approx(ref).epsilon(1e-15));

  auto y = y0;
  scalar_table().axpby(2.0, x.data(), -0.5, y.data(), y.size());
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(2.0 * x[i] - 0.5 * y0[i]));
}

TEST_CASE("every compiled variant agrees with the scalar reference, including tails") {
  const auto tables = variant_tables();
  MESSAGE("variants available: " << tables.size() << ", active: " << isa_name(active().isa));
  for (const KernelTable* t : tables) {
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto x = gaussian(n, 10 + n), y0 = gaussian(n, 100 + n);
      const double sref = scalar_table().dot(x.data(), y0.data(), n);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y0[i]);
      CHECK(std::abs(t->dot(x.data(), y0.data(), n) - sref) <= 1e-14 * (mag + 1.0));

      auto ys = y0, yv = y0;
      scalar_table().axpy(0.75, x.data(), ys.data(), n);
      t->axpy(0.75, x.data(), yv.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-15 * (std::abs(ys[i]) + 1.0));

      ys = y0;
      yv = y0;
      scalar_table().scale(-1.25, ys.data(), n);
      t->scale(-1.25, yv.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(ys[i] == yv[i]);

      ys = y0;
      yv = y0;
      scalar_table().axpby(0.3, x.data(), 1.7, ys.data(), n);
      t->axpby(0.3, x.data(), 1.7, yv.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-15 * (std::abs(ys[i]) + 1.0));
    }
  }
}

TEST_CASE("span wrappers route through the active table") {
  const auto x = gaussian(19, 3);
  CHECK(squared_norm(x) == doctest::Approx(dot(x, x)).epsilon(1e-15));
  CHECK(table_for(Isa::Scalar) == &scalar_table());
  CHECK((active().isa == Isa::Scalar || table_for(active().isa) != nullptr));
}
