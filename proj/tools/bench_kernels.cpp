// Times the OpenMP kernels against the serial reference on the shapes the
// models actually exercise, and verifies the two agree bit-for-bit. Larger
// shapes are included to show where the parallel path starts to pay.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trackcast/numerics/kernels.hpp"
#include "trackcast/numerics/rng.hpp"

using trackcast::num::Rng;
namespace kern = trackcast::num::kernels;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    f();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool bitwise) {
  std::printf("%-34s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              bitwise ? "bitwise-equal" : "MISMATCH");
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n, int reps, Rng& rng) {
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<float> c_ser(m * n), c_par(m * n);

  const double ts = time_best_of(reps, [&] {
    kern::serial::matmul_nn(a.data(), b.data(), c_ser.data(), m, k, n);
  });
  const double tp = time_best_of(reps, [&] {
    kern::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n);
  });
  const bool same = std::memcmp(c_ser.data(), c_par.data(), m * n * sizeof(float)) == 0;
  report("matmul " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n), ts,
         tp, same);
}

void bench_attention(std::size_t batch, std::size_t seq, std::size_t heads, std::size_t d,
                     int reps, Rng& rng) {
  const auto q = random_vec(batch * seq * d, rng);
  const auto k = random_vec(batch * seq * d, rng);
  const auto v = random_vec(batch * seq * d, rng);
  std::vector<float> out_ser(batch * seq * d), out_par(batch * seq * d);
  std::vector<float> probs_ser(batch * heads * seq * seq), probs_par(batch * heads * seq * seq);

  const double ts = time_best_of(reps, [&] {
    kern::serial::attention_forward(q.data(), k.data(), v.data(), out_ser.data(),
                                    probs_ser.data(), batch, seq, heads, d);
  });
  const double tp = time_best_of(reps, [&] {
    kern::attention_forward(q.data(), k.data(), v.data(), out_par.data(), probs_par.data(),
                            batch, seq, heads, d);
  });
  const bool same =
      std::memcmp(out_ser.data(), out_par.data(), out_ser.size() * sizeof(float)) == 0 &&
      std::memcmp(probs_ser.data(), probs_par.data(), probs_ser.size() * sizeof(float)) == 0;
  report("attention b" + std::to_string(batch) + " s" + std::to_string(seq) + " h" +
             std::to_string(heads) + " d" + std::to_string(d),
         ts, tp, same);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 20;
#ifdef _OPENMP
  std::printf("openmp threads: %d, reps: %d (best-of)\n", omp_get_max_threads(), reps);
#else
  std::printf("built without openmp; both columns run the same code. reps: %d\n", reps);
#endif

  Rng rng(7);
  // Training-sized shapes.
  bench_matmul(512, 14, 64, reps, rng);    // input embedding, batch 64 x 8 steps
  bench_matmul(512, 64, 32, reps, rng);    // embedding to d_model
  bench_matmul(64, 256, 64, reps, rng);    // decoder first layer
  bench_attention(64, 8, 2, 32, reps, rng);
  // Scaled-up shapes where the parallel path matters.
  bench_matmul(4096, 256, 256, reps, rng);
  bench_matmul(1024, 1024, 256, reps, rng);
  bench_attention(512, 64, 4, 64, reps, rng);
  return 0;
}
