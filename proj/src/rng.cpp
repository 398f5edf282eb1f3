#include "airtp/rng.hpp"

namespace airtp {

ComplexMatrix complex_gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double variance,
                                      cplx mean) {
  ComplexMatrix m(rows, cols);
  for (auto& v : m.values()) v = mean + rng.complex_normal(variance);
  return m;
}

RealMatrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  RealMatrix m(rows, cols);
  for (auto& v : m.values()) v = stddev * rng.normal();
  return m;
}

}  // namespace airtp
