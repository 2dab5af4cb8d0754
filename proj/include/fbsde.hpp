// SPDX-License-Identifier: MIT
#pragma once

#include "fbsde/config.hpp"
#include "fbsde/error.hpp"
#include "fbsde/fbm.hpp"
#include "fbsde/field.hpp"
#include "fbsde/format.hpp"
#include "fbsde/frac_calc.hpp"
#include "fbsde/functions.hpp"
#include "fbsde/grid.hpp"
#include "fbsde/model.hpp"
#include "fbsde/quadrature.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/verify.hpp"

namespace fbsde {
inline constexpr const char* version = "0.1.0";
}
