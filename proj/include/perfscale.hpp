#ifndef PERFSCALE_HPP
#define PERFSCALE_HPP

#include "perfscale/config.hpp"
#include "perfscale/corrector.hpp"
#include "perfscale/errors.hpp"
#include "perfscale/fit.hpp"
#include "perfscale/geometry.hpp"
#include "perfscale/grid_calculus.hpp"
#include "perfscale/linsolve.hpp"
#include "perfscale/operator_norms.hpp"
#include "perfscale/predictions.hpp"
#include "perfscale/report.hpp"
#include "perfscale/sweep.hpp"

#endif
