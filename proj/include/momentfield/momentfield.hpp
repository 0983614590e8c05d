#pragma once

// Spectral laboratory for second moments and covariances of linear
// parabolic evolution equations driven by Q-Wiener noise: a deterministic
// tensorized two-time solver, an exact-in-law Monte Carlo simulator, and
// the cross-checks (weak variational identities, Ito isometries,
// regularity bounds) tying the two together.

#include "momentfield/config.hpp"
#include "momentfield/errors.hpp"
#include "momentfield/moment_field.hpp"
#include "momentfield/moment_solver.hpp"
#include "momentfield/noise.hpp"
#include "momentfield/parallel.hpp"
#include "momentfield/polynomial.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/quadrature.hpp"
#include "momentfield/random_pde.hpp"
#include "momentfield/residuals.hpp"
#include "momentfield/rng.hpp"
#include "momentfield/runner.hpp"
#include "momentfield/simulate.hpp"
#include "momentfield/spectral_operator.hpp"
#include "momentfield/time_grid.hpp"
