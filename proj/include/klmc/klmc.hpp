#pragma once

#include "klmc/error.hpp"
#include "klmc/rng.hpp"
#include "klmc/potentials.hpp"
#include "klmc/integrators.hpp"
#include "klmc/quadrature.hpp"
#include "klmc/optimize.hpp"
#include "klmc/metric.hpp"
#include "klmc/coupling.hpp"
#include "klmc/parallel.hpp"
#include "klmc/meanfield.hpp"
#include "klmc/harness.hpp"
