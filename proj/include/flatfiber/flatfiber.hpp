#pragma once

/// Umbrella header for the flat-map semilinear elliptic solver.

#include "flatfiber/assembly.hpp"
#include "flatfiber/commands.hpp"
#include "flatfiber/config.hpp"
#include "flatfiber/csv.hpp"
#include "flatfiber/error.hpp"
#include "flatfiber/fiber_explorer.hpp"
#include "flatfiber/field.hpp"
#include "flatfiber/flat_solver.hpp"
#include "flatfiber/mesh.hpp"
#include "flatfiber/nonlinearity.hpp"
#include "flatfiber/spectral.hpp"
