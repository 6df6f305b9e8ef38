#pragma once

// Interval estimation for selected parameters under the spike-and-slab normal model.

#include "ebfcr/decision.hpp"
#include "ebfcr/error.hpp"
#include "ebfcr/estimation.hpp"
#include "ebfcr/mc_eval.hpp"
#include "ebfcr/model.hpp"
#include "ebfcr/normal.hpp"
#include "ebfcr/procedures.hpp"
#include "ebfcr/region.hpp"
#include "ebfcr/rng.hpp"
#include "ebfcr/selection.hpp"
