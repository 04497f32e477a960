#pragma once

// Guards against a miscomputing BLAS kernel selection.
//
// Some OpenBLAS builds pick a dgemm kernel at load time that returns wrong
// products on certain AVX-512 hosts. Every dense product and eigensolve in
// this library goes through BLAS, so the check runs once before the first
// diagonalization.

#include <string>

namespace qfluct {

struct BlasCheck {
  bool ok = true;
  double max_error = 0.0;
  std::string detail;
};

/// Compares a BLAS dgemm against a plain triple loop on fixed matrices.
/// The result is computed once per process.
const BlasCheck& blas_self_check();

/// Throws SolverError when the self-check failed.
void require_sound_blas();

/// For executables: when the check fails and OPENBLAS_CORETYPE is unset,
/// re-executes the process with a known-good kernel family. Returns normally
/// when BLAS is sound; returns false when it is not and re-execution was not
/// possible.
bool ensure_sound_blas(int argc, char** argv);

}  // namespace qfluct
