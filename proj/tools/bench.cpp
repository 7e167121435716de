// fer-bench: times individual kernels under the serial reference and the
// OpenMP backend, checks both produce identical bits, and prints the speedup.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fer/kernels.hpp"
#include "fer/rng.hpp"

using namespace fer;
namespace k = fer::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Case {
  std::string name;
  std::function<void(std::vector<double>&)> serial;
  std::function<void(std::vector<double>&)> parallel;
  std::size_t out_len;
  int reps;
};

void run(const Case& c) {
  std::vector<double> out_serial(c.out_len), out_parallel(c.out_len);
  const double ms_serial = time_ms([&] { c.serial(out_serial); }, c.reps);
  const double ms_parallel = time_ms([&] { c.parallel(out_parallel); }, c.reps);
  const bool same = bit_equal(out_serial, out_parallel);
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx   %s\n", c.name.c_str(), ms_serial, ms_parallel,
              ms_serial / ms_parallel, same ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--reps" && i + 1 < argc) {
      reps = std::stoi(argv[++i]);
    } else if (arg == "--threads" && i + 1 < argc) {
#ifdef _OPENMP
      omp_set_num_threads(std::stoi(argv[++i]));
#else
      ++i;
#endif
    } else {
      std::fprintf(stderr, "usage: fer-bench [--reps N] [--threads N]\n");
      return 1;
    }
  }

  std::printf("OpenMP: %s, max threads: %d\n\n", k::openmp_enabled() ? "enabled" : "disabled",
              k::max_threads());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  Rng rng(7);

  {
    const int n = 8, ic = 8, oc = 16, h = 64, w = 64;
    const auto in = random_vec(static_cast<std::size_t>(n) * ic * h * w, rng);
    const auto weights = random_vec(static_cast<std::size_t>(oc) * ic * 9, rng);
    const auto bias = random_vec(oc, rng);
    const std::size_t out_len = static_cast<std::size_t>(n) * oc * h * w;
    run({"conv3x3_forward 8x8x64x64",
         [&](std::vector<double>& o) { k::serial::conv3x3_forward(in.data(), n, ic, h, w, weights.data(), bias.data(), oc, o.data()); },
         [&](std::vector<double>& o) { k::par::conv3x3_forward(in.data(), n, ic, h, w, weights.data(), bias.data(), oc, o.data()); },
         out_len, reps});

    const auto dout = random_vec(out_len, rng);
    run({"conv3x3_backward_input",
         [&](std::vector<double>& o) { k::serial::conv3x3_backward_input(dout.data(), n, oc, h, w, weights.data(), ic, o.data()); },
         [&](std::vector<double>& o) { k::par::conv3x3_backward_input(dout.data(), n, oc, h, w, weights.data(), ic, o.data()); },
         static_cast<std::size_t>(n) * ic * h * w, reps});

    run({"conv3x3_backward_params",
         [&](std::vector<double>& o) {
           std::vector<double> dbias(oc);
           k::serial::conv3x3_backward_params(in.data(), dout.data(), n, ic, oc, h, w, o.data(), dbias.data());
         },
         [&](std::vector<double>& o) {
           std::vector<double> dbias(oc);
           k::par::conv3x3_backward_params(in.data(), dout.data(), n, ic, oc, h, w, o.data(), dbias.data());
         },
         static_cast<std::size_t>(oc) * ic * 9, reps});
  }

  {
    const int h = 2048, w = 2048;
    const auto img = random_vec(static_cast<std::size_t>(h) * w, rng);
    run({"sobel_magnitude 2048x2048",
         [&](std::vector<double>& o) { k::serial::sobel_magnitude(img.data(), h, w, o.data()); },
         [&](std::vector<double>& o) { k::par::sobel_magnitude(img.data(), h, w, o.data()); },
         static_cast<std::size_t>(h) * w, reps});
  }

  {
    const int n = 64, c = 32, h = 64, w = 64;
    const auto in = random_vec(static_cast<std::size_t>(n) * c * h * w, rng);
    run({"avgpool2_forward 64x32x64x64",
         [&](std::vector<double>& o) { k::serial::avgpool2_forward(in.data(), n, c, h, w, o.data()); },
         [&](std::vector<double>& o) { k::par::avgpool2_forward(in.data(), n, c, h, w, o.data()); },
         static_cast<std::size_t>(n) * c * k::pooled_dim(h) * k::pooled_dim(w), reps});
  }

  {
    const int n = 256, d = 512, classes = 6;
    const auto in = random_vec(static_cast<std::size_t>(n) * d, rng);
    const auto weights = random_vec(static_cast<std::size_t>(d) * classes, rng);
    const auto bias = random_vec(classes, rng);
    run({"dense_forward 256x512x6",
         [&](std::vector<double>& o) { k::serial::dense_forward(in.data(), n, d, weights.data(), bias.data(), classes, o.data()); },
         [&](std::vector<double>& o) { k::par::dense_forward(in.data(), n, d, weights.data(), bias.data(), classes, o.data()); },
         static_cast<std::size_t>(n) * classes, reps});
  }

  return 0;
}
