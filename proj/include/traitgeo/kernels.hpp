#pragma once

// Data-parallel inner loops over direction vectors. Each operation has a
// scalar reference implementation and optional AVX2/FMA and NEON variants;
// the active table is chosen once at first use from the host CPU.
//
// Setting TRAITGEO_KERNELS=scalar in the environment forces the reference
// table (useful when bit-comparing against another machine).

#include <cstddef>
#include <span>
#include <string_view>

namespace traitgeo::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*scale)(double a, double* x, std::size_t n);
  // y = a * x + b * y
  void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
};

std::string_view isa_name(Isa isa);

/// Reference table; always available.
const KernelTable& scalar_table();

/// Table for `isa`, or nullptr when it was not compiled in or the CPU lacks it.
const KernelTable* table_for(Isa isa);

/// The table used by the free functions below.
const KernelTable& active();

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline double squared_norm(std::span<const double> x) {
  return active().dot(x.data(), x.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline void scale(double a, std::span<double> x) { active().scale(a, x.data(), x.size()); }

inline void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  active().axpby(a, x.data(), b, y.data(), x.size());
}

// Per-ISA entry points; defined in the variant translation units.
namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool compiled();
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
bool compiled();
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
}  // namespace neon

}  // namespace traitgeo::kernels
