#pragma once

// didlab: a difference-in-differences simulation and estimation laboratory.

#include "didlab/config.hpp"
#include "didlab/dgp.hpp"
#include "didlab/harness.hpp"
#include "didlab/io.hpp"
#include "didlab/matching.hpp"
#include "didlab/oracle.hpp"
#include "didlab/regression.hpp"
#include "didlab/rng.hpp"
#include "didlab/types.hpp"
