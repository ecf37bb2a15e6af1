// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Umbrella header: the whole adaptive task-balancing library.
///
///   core    — task graphs, run identities, validation matrices, weights
///   measure — contribution matrix C and difficulty vector D
///   weights — softmax strategy weights, integration, auto temperature
///   loss    — token-level loss aggregation schemes (EW/VITW/TLA/RLW/DWA)
///   metrics — per-task improvement, overall improvement and interference
///   bench   — synthetic suite, toy model, preparation runs, full pipeline

#include "bench.hpp"
#include "core.hpp"
#include "error.hpp"
#include "loss.hpp"
#include "measure.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "table.hpp"
#include "weights.hpp"
