// Quick single-thread matmul throughput probe. Used to size the training
// configurations against the wall-clock budgets; not part of the test suite.
#include <chrono>
#include <cstdio>

#include "uapt/rng.hpp"
#include "uapt/tensor.hpp"

using namespace uapt;

static void bench(int m, int k, int n) {
  Rng rng(1);
  TensorF a = TensorF::randn({m, k}, rng, 0.1f);
  TensorF b = TensorF::randn({k, n}, rng, 0.1f);
  NoGradGuard ng;
  // warmup
  volatile float sink = matmul(a, b).at(0, 0);
  (void)sink;
  int iters = 0;
  auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  while (elapsed < 0.5) {
    sink = matmul(a, b).at(0, 0);
    ++iters;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  double flops = 2.0 * m * k * n * iters;
  std::printf("%4dx%4dx%4d  %7.2f GFLOP/s  (%d iters, %.3fs)\n", m, k, n,
              flops / elapsed / 1e9, iters, elapsed);
}

int main() {
  bench(36, 64, 64);     // LM layer projection at desk scale
  bench(36, 64, 256);    // LM vocab head
  bench(64, 64, 64);
  bench(128, 128, 128);
  bench(256, 256, 256);
  bench(512, 512, 512);
  return 0;
}
