#pragma once

// Umbrella header.

#include "stopsum/common.hpp"
#include "stopsum/piecewise.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/lattice.hpp"
#include "stopsum/compound.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/tilting.hpp"
#include "stopsum/limits.hpp"
#include "stopsum/tail_model.hpp"
#include "stopsum/constructions.hpp"
#include "stopsum/serialize.hpp"
