#pragma once

#include "stablebel/bel.hpp"
#include "stablebel/cli.hpp"
#include "stablebel/config.hpp"
#include "stablebel/error.hpp"
#include "stablebel/parallel.hpp"
#include "stablebel/random.hpp"
#include "stablebel/sde.hpp"
#include "stablebel/spde_heat.hpp"
#include "stablebel/stable.hpp"
#include "stablebel/stats.hpp"
#include "stablebel/timechange.hpp"
