#pragma once

#include "gpswf/approx.hpp"
#include "gpswf/basis.hpp"
#include "gpswf/diagnostics.hpp"
#include "gpswf/errors.hpp"
#include "gpswf/parallel.hpp"
#include "gpswf/quadrature.hpp"
#include "gpswf/radial.hpp"
#include "gpswf/specfun.hpp"
