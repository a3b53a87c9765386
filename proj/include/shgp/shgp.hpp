#pragma once

// Joint hierarchical Gaussian-process modeling of a space-height signal and a
// scalar spatial outcome, with reduced-rank (predictive-process) dimension
// reduction, a collapsed MCMC sampler, knot selection, posterior prediction
// and probabilistic scoring.

#include "shgp/chain_io.hpp"
#include "shgp/collapsed.hpp"
#include "shgp/config.hpp"
#include "shgp/csv.hpp"
#include "shgp/dataset.hpp"
#include "shgp/errors.hpp"
#include "shgp/kernels.hpp"
#include "shgp/knot_selection.hpp"
#include "shgp/metrics.hpp"
#include "shgp/predict.hpp"
#include "shgp/preprocess.hpp"
#include "shgp/priors.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/rng.hpp"
#include "shgp/sampler.hpp"
#include "shgp/simulate.hpp"
#include "shgp/types.hpp"
