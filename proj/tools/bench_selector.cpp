// Benchmark: cached-maxima OpenMP greedy vs the serial reference selector.
// Verifies both return the same selection while timing them.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>

#include "saver/selector.hpp"

using namespace saver;
using Clock = std::chrono::steady_clock;

namespace {

SimilarityBundle random_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SimilarityBundle b;
  b.n = n;
  b.relevance.resize(n);
  for (auto& r : b.relevance) r = uni(rng);
  b.cross.assign(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = uni(rng);
      b.cross[i * n + j] = v;
      b.cross[j * n + i] = v;
    }
  return b;
}

template <typename F>
double time_ms(F&& f, int reps) {
  auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
         reps;
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 256;
  std::size_t k = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 8;
  int reps = argc > 3 ? std::atoi(argv[3]) : 5;

  std::mt19937_64 rng(1);
  auto b = random_instance(rng, n);

  auto fast = greedy_select(b, SisWeights{}, k);
  auto ref = greedy_select_reference(b, SisWeights{}, k);
  if (fast.chosen != ref.chosen) {
    std::fprintf(stderr, "selection mismatch between implementations\n");
    return 1;
  }

  double t_fast = time_ms([&] { greedy_select(b, SisWeights{}, k); }, reps);
  double t_ref =
      time_ms([&] { greedy_select_reference(b, SisWeights{}, k); }, reps);

  std::printf("N=%zu K=%zu reps=%d\n", n, k, reps);
  std::printf("cached+parallel greedy : %9.3f ms\n", t_fast);
  std::printf("serial reference       : %9.3f ms\n", t_ref);
  std::printf("speedup                : %9.2fx\n", t_ref / t_fast);
  std::printf("objective              : %.6f (identical selections)\n",
              fast.objective);
  return 0;
}
