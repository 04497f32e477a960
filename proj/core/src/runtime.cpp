#include "qfluct/runtime.hpp"

#include <cblas.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "qfluct/errors.hpp"

namespace qfluct {

namespace {

BlasCheck run_check() {
  // Sizes above the small-matrix path, where the faulty kernels show up.
  constexpr int m = 320, n = 288, k = 304;
  std::mt19937_64 engine(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n),
      c(static_cast<std::size_t>(m) * n, 0.0);
  for (auto& x : a) x = u(engine);
  for (auto& x : b) x = u(engine);
  cblas_dgemm(CblasColMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0, a.data(), k, b.data(), k, 0.0, c.data(), m);
  BlasCheck r;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) {
      double ref = 0.0;
      for (int l = 0; l < k; ++l) ref += a[static_cast<std::size_t>(i) * k + l] * b[static_cast<std::size_t>(j) * k + l];
      r.max_error = std::max(r.max_error, std::abs(ref - c[static_cast<std::size_t>(j) * m + i]));
    }
  }
  r.ok = r.max_error < 1e-10;
  if (!r.ok) {
    const char* core = std::getenv("OPENBLAS_CORETYPE");
    r.detail = "BLAS dgemm self-check failed (max error " + std::to_string(r.max_error) + ", OPENBLAS_CORETYPE=" +
               (core ? core : "<auto>") + "); set OPENBLAS_CORETYPE=SkylakeX or Haswell";
  }
  return r;
}

}  // namespace

const BlasCheck& blas_self_check() {
  static const BlasCheck result = run_check();
  return result;
}

void require_sound_blas() {
  const BlasCheck& c = blas_self_check();
  if (!c.ok) throw SolverError(c.detail);
}

bool ensure_sound_blas(int /*argc*/, char** argv) {
  if (blas_self_check().ok) return true;
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return false;
  const bool avx512 = __builtin_cpu_supports("avx512f");
  ::setenv("OPENBLAS_CORETYPE", avx512 ? "SkylakeX" : "Haswell", 1);
  ::execv("/proc/self/exe", argv);
  return false;
}

}  // namespace qfluct
