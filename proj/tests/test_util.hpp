#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cellvis/tensor.hpp"

namespace test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cellvis-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Central-difference gradient of `f` with respect to the values of `x`.
inline std::vector<double> numericGrad(const std::function<double()>& f, cellvis::nn::Tensor& x,
                                       double h = 1e-6) {
  auto v = x.mutableValues();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f();
    v[i] = keep - h;
    const double down = f();
    v[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace test
