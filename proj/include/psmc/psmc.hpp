#ifndef PSMC_PSMC_HPP
#define PSMC_PSMC_HPP

#include "psmc/ais.hpp"
#include "psmc/core.hpp"
#include "psmc/diagnostics.hpp"
#include "psmc/islands.hpp"
#include "psmc/kernels.hpp"
#include "psmc/mcmc.hpp"
#include "psmc/smc.hpp"
#include "psmc/targets.hpp"

#endif
