#pragma once

#include <random>

#include "unic/error.hpp"
#include "unic/geometry.hpp"

namespace unic::test {

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double spread = 0.1) {
  std::uniform_real_distribution<double> u(-spread, spread);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(Point3(u(rng), u(rng), u(rng)));
  return c;
}

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a unic::Error");
}

template <typename Fn>
std::string error_message_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace unic::test
