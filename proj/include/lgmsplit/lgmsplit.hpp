#pragma once

#include "lgmsplit/error.hpp"
#include "lgmsplit/random.hpp"
#include "lgmsplit/sparse.hpp"
#include "lgmsplit/cholesky.hpp"
#include "lgmsplit/gmrf.hpp"
#include "lgmsplit/likelihood.hpp"
#include "lgmsplit/gaussian_likelihood.hpp"
#include "lgmsplit/gev.hpp"
#include "lgmsplit/model.hpp"
#include "lgmsplit/proposals.hpp"
#include "lgmsplit/trace.hpp"
#include "lgmsplit/sampler.hpp"
#include "lgmsplit/theta_hessian.hpp"
#include "lgmsplit/diagnostics.hpp"
#include "lgmsplit/scenarios/covariates.hpp"
#include "lgmsplit/scenarios/gaussian.hpp"
#include "lgmsplit/scenarios/gev.hpp"
