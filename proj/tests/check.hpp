#pragma once

#include <cmath>

#include "doctest.h"

#define CHECK_NEAR(a, b, tol) CHECK_LE(std::abs(static_cast<double>(a) - static_cast<double>(b)), (tol))
#define REQUIRE_NEAR(a, b, tol) REQUIRE_LE(std::abs(static_cast<double>(a) - static_cast<double>(b)), (tol))
// Within four ulps at the magnitude of b.
#define CHECK_DOUBLE_EQ(a, b) \
  CHECK_LE(std::abs(static_cast<double>(a) - static_cast<double>(b)), 4.0 * 2.220446049250313e-16 * std::abs(static_cast<double>(b)))
