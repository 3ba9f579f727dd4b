#pragma once

#include "alignment.hpp"
#include "error.hpp"
#include "forest.hpp"
#include "k2p.hpp"
#include "likelihood.hpp"
#include "parallel.hpp"
#include "proposals.hpp"
#include "random.hpp"
#include "samplers.hpp"
#include "simulate.hpp"
#include "smc_core.hpp"
#include "summaries.hpp"
#include "tree.hpp"
