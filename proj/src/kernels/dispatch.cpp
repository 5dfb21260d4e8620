#include "pgdd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace pgdd::kern {

namespace {

Ops make_scalar_table() {
  Ops t;
  t.axpby = &axpby_ref<float>;
  t.add_inplace = &add_inplace_ref<float>;
  t.guided_combine = &guided_combine_ref<float>;
  t.dot = &dot_ref<float>;
  t.sumsq = &sumsq_ref<float>;
  t.gemm_nn = &gemm_nn_ref<float>;
  t.gemm_tn = &gemm_tn_ref<float>;
  t.gemm_nt = &gemm_nt_ref<float>;
  t.adam_step = &adam_step_ref;
  return t;
}

struct Selection {
  Ops table;
  std::string path;
};

Selection select() {
  const char* env = std::getenv("PGDD_SIMD");
  bool force_scalar = env && std::strcmp(env, "scalar") == 0;
  if (!force_scalar) {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
      Ops t;
      t.axpby = &avx2::axpby;
      t.add_inplace = &avx2::add_inplace;
      t.guided_combine = &avx2::guided_combine;
      t.dot = &avx2::dot;
      t.sumsq = &avx2::sumsq;
      t.gemm_nn = &avx2::gemm_nn;
      t.gemm_tn = &avx2::gemm_tn;
      t.gemm_nt = &avx2::gemm_nt;
      t.adam_step = &avx2::adam_step;
      return {t, "avx2"};
    }
#elif defined(__aarch64__)
    Ops t;
    t.axpby = &neon::axpby;
    t.add_inplace = &neon::add_inplace;
    t.guided_combine = &neon::guided_combine;
    t.dot = &neon::dot;
    t.sumsq = &neon::sumsq;
    t.gemm_nn = &neon::gemm_nn;
    t.gemm_tn = &neon::gemm_tn;
    t.gemm_nt = &neon::gemm_nt;
    t.adam_step = &neon::adam_step;
    return {t, "neon"};
#endif
  }
  return {make_scalar_table(), "scalar"};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

}  // namespace

const Ops& ops() { return selection().table; }

const std::string& simd_path() { return selection().path; }

const Ops& scalar_ops() {
  static const Ops t = make_scalar_table();
  return t;
}

}  // namespace pgdd::kern
