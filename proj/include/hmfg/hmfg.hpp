#pragma once

// Everything in one include.

#include "hmfg/core.hpp"
#include "hmfg/grid.hpp"
#include "hmfg/trig_poly.hpp"
#include "hmfg/vfields.hpp"
#include "hmfg/operators.hpp"
#include "hmfg/control.hpp"
#include "hmfg/coupling.hpp"
#include "hmfg/hjb.hpp"
#include "hmfg/fpstat.hpp"
#include "hmfg/mfg.hpp"
#include "hmfg/mollify.hpp"
#include "hmfg/regularity.hpp"
#include "hmfg/ccgeom.hpp"
#include "hmfg/transport.hpp"
#include "hmfg/games.hpp"
#include "hmfg/config.hpp"
#include "hmfg/cli.hpp"
