#pragma once

#include "dcfq/channel.hpp"
#include "dcfq/csv.hpp"
#include "dcfq/equilibrium.hpp"
#include "dcfq/errors.hpp"
#include "dcfq/hol_chain.hpp"
#include "dcfq/params.hpp"
#include "dcfq/rng.hpp"
#include "dcfq/scenario.hpp"
#include "dcfq/service_time.hpp"
#include "dcfq/simulator.hpp"
#include "dcfq/stability.hpp"
#include "dcfq/version.hpp"
