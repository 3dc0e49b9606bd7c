#pragma once

#include "tadmm/cluster.hpp"
#include "tadmm/config.hpp"
#include "tadmm/consensus.hpp"
#include "tadmm/data.hpp"
#include "tadmm/error.hpp"
#include "tadmm/inner_solvers.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/problem.hpp"
#include "tadmm/prox.hpp"
#include "tadmm/ratecheck.hpp"
#include "tadmm/record.hpp"
#include "tadmm/rng.hpp"
#include "tadmm/transpose_lasso.hpp"
#include "tadmm/unwrapped.hpp"
