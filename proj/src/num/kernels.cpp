#include "nodetab/num/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace nodetab::num::kern {

namespace {

constexpr int MR = 4;
constexpr int NR = 16;
constexpr int KC = 320;
constexpr int MC = 144;
constexpr int NC = 4096;
constexpr size_t RED_BLOCK = 4096;

inline double load_a(bool ta, const double* A, int lda, int i, int p) {
  return ta ? A[size_t(p) * lda + i] : A[size_t(i) * lda + p];
}
inline double load_b(bool tb, const double* B, int ldb, int p, int j) {
  return tb ? B[size_t(j) * ldb + p] : B[size_t(p) * ldb + j];
}

// A block (mc x kc) packed as ceil(mc/MR) panels of kc columns of MR rows,
// zero padded so the micro kernel never branches.
void pack_a(bool ta, const double* A, int lda, int i0, int p0, int mc, int kc, double* out) {
  for (int ir = 0; ir < mc; ir += MR) {
    int mr = std::min(MR, mc - ir);
    if (mr == MR && !ta) {
      const double* a0 = A + size_t(i0 + ir) * lda + p0;
      for (int p = 0; p < kc; ++p) {
        for (int r = 0; r < MR; ++r) out[r] = a0[size_t(r) * lda + p];
        out += MR;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        for (int r = 0; r < MR; ++r)
          out[r] = r < mr ? load_a(ta, A, lda, i0 + ir + r, p0 + p) : 0.0;
        out += MR;
      }
    }
  }
}

void pack_b(bool tb, const double* B, int ldb, int p0, int j0, int kc, int nc, double* out) {
  for (int jr = 0; jr < nc; jr += NR) {
    int nr = std::min(NR, nc - jr);
    if (nr == NR && !tb) {
      const double* b0 = B + size_t(p0) * ldb + j0 + jr;
      for (int p = 0; p < kc; ++p) {
        std::memcpy(out, b0 + size_t(p) * ldb, sizeof(double) * NR);
        out += NR;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        for (int j = 0; j < NR; ++j)
          out[j] = j < nr ? load_b(tb, B, ldb, p0 + p, j0 + jr + j) : 0.0;
        out += NR;
      }
    }
  }
}

void micro(int kc, const double* Ap, const double* Bp, double* acc) {
  for (int p = 0; p < kc; ++p) {
    const double* bp = Bp + size_t(p) * NR;
    for (int r = 0; r < MR; ++r) {
      double a = Ap[size_t(p) * MR + r];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[r * NR + j] += a * bp[j];
    }
  }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          double* C, int ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (int i = 0; i < m; ++i) std::memset(C + size_t(i) * ldc, 0, sizeof(double) * n);
    return;
  }
  std::vector<double> apack(size_t(MC) * KC);
  std::vector<double> bpack(size_t(KC) * NC);
  for (int jc = 0; jc < n; jc += NC) {
    int nc = std::min(NC, n - jc);
    int ncp = (nc + NR - 1) / NR * NR;
    for (int pc = 0; pc < k; pc += KC) {
      int kc = std::min(KC, k - pc);
      bool first = pc == 0 && !accumulate;
      pack_b(tb, B, ldb, pc, jc, kc, nc, bpack.data());
      for (int ic = 0; ic < m; ic += MC) {
        int mc = std::min(MC, m - ic);
        pack_a(ta, A, lda, ic, pc, mc, kc, apack.data());
#pragma omp parallel for schedule(static)
        for (int jr = 0; jr < ncp / NR; ++jr) {
          const double* Bp = bpack.data() + size_t(jr) * kc * NR;
          int nr = std::min(NR, nc - jr * NR);
          for (int ir = 0; ir < mc; ir += MR) {
            int mr = std::min(MR, mc - ir);
            double acc[MR * NR] = {};
            micro(kc, apack.data() + size_t(ir) * kc, Bp, acc);
            double* c = C + size_t(ic + ir) * ldc + jc + jr * NR;
            for (int r = 0; r < mr; ++r)
              for (int j = 0; j < nr; ++j) {
                double v = acc[r * NR + j];
                c[size_t(r) * ldc + j] = first ? v : c[size_t(r) * ldc + j] + v;
              }
          }
        }
      }
    }
  }
}

void add(const double* a, const double* b, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_add(const double* a, double alpha, double beta, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = alpha * a[i] + beta;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void leaky(const double* a, double slope, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : slope * a[i];
}

void tanh_(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
}

void exp_(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}

void log_(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
}

void sqrt_(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
}

void recip(const double* a, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) out[i] = 1.0 / a[i];
}

void add_rowvec(const double* a, const double* v, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
#pragma omp simd
    for (int j = 0; j < c; ++j) oi[j] = ai[j] + v[j];
  }
}

void mul_rowvec(const double* a, const double* v, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
#pragma omp simd
    for (int j = 0; j < c; ++j) oi[j] = ai[j] * v[j];
  }
}

void add_colvec(const double* a, const double* v, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
    double vi = v[i];
#pragma omp simd
    for (int j = 0; j < c; ++j) oi[j] = ai[j] + vi;
  }
}

void mul_colvec(const double* a, const double* v, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
    double vi = v[i];
#pragma omp simd
    for (int j = 0; j < c; ++j) oi[j] = ai[j] * vi;
  }
}

void col_sum(const double* a, double* out, int r, int c) {
  constexpr int CB = 64;
#pragma omp parallel for schedule(static)
  for (int j0 = 0; j0 < c; j0 += CB) {
    int j1 = std::min(j0 + CB, c);
    for (int j = j0; j < j1; ++j) out[j] = 0.0;
    for (int i = 0; i < r; ++i) {
      const double* ai = a + size_t(i) * c;
      for (int j = j0; j < j1; ++j) out[j] += ai[j];
    }
  }
}

void row_sum(const double* a, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (int j = 0; j < c; ++j) s += ai[j];
    out[i] = s;
  }
}

double sum_all(const double* a, size_t n) {
  size_t nb = (n + RED_BLOCK - 1) / RED_BLOCK;
  std::vector<double> partial(nb);
#pragma omp parallel for schedule(static)
  for (size_t b = 0; b < nb; ++b) {
    size_t lo = b * RED_BLOCK, hi = std::min(lo + RED_BLOCK, n);
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (size_t i = lo; i < hi; ++i) s += a[i];
    partial[b] = s;
  }
  double total = 0.0;
  for (size_t b = 0; b < nb; ++b) total += partial[b];
  return total;
}

void softmax_rows(const double* a, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
    double mx = ai[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, ai[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      oi[j] = std::exp(ai[j] - mx);
      s += oi[j];
    }
    double inv = 1.0 / s;
    for (int j = 0; j < c; ++j) oi[j] *= inv;
  }
}

void onehot_argmax_rows(const double* a, double* out, int r, int c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (ai[j] > ai[best]) best = j;
    for (int j = 0; j < c; ++j) oi[j] = 0.0;
    oi[best] = 1.0;
  }
}

namespace serial {

void gemm(bool ta, bool tb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          double* C, int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += load_a(ta, A, lda, i, p) * load_b(tb, B, ldb, p, j);
      double* c = C + size_t(i) * ldc + j;
      *c = accumulate ? *c + s : s;
    }
}

double sum_all(const double* a, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void col_sum(const double* a, double* out, int r, int c) {
  for (int j = 0; j < c; ++j) out[j] = 0.0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += a[size_t(i) * c + j];
}

void softmax_rows(const double* a, double* out, int r, int c) {
  for (int i = 0; i < r; ++i) {
    const double* ai = a + size_t(i) * c;
    double* oi = out + size_t(i) * c;
    double mx = ai[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, ai[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      oi[j] = std::exp(ai[j] - mx);
      s += oi[j];
    }
    for (int j = 0; j < c; ++j) oi[j] /= s;
  }
}

}  // namespace serial

}  // namespace nodetab::num::kern
