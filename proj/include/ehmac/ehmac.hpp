#pragma once

#include "ehmac/central_policy.hpp"
#include "ehmac/checkpoint.hpp"
#include "ehmac/config.hpp"
#include "ehmac/dqn.hpp"
#include "ehmac/env.hpp"
#include "ehmac/experiment.hpp"
#include "ehmac/matrix.hpp"
#include "ehmac/mdp.hpp"
#include "ehmac/metrics.hpp"
#include "ehmac/mfg.hpp"
#include "ehmac/mlp.hpp"
#include "ehmac/offline.hpp"
#include "ehmac/rng.hpp"
#include "ehmac/statespace.hpp"
