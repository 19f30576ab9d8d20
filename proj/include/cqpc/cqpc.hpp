#pragma once

// Umbrella header for the library (the JSON configuration layer is separate:
// include "cqpc/config.hpp" for it).

#include "cqpc/bounds.hpp"
#include "cqpc/conformal.hpp"
#include "cqpc/csv.hpp"
#include "cqpc/datagen.hpp"
#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/estimation.hpp"
#include "cqpc/harness.hpp"
#include "cqpc/isotonic.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/neighbors.hpp"
#include "cqpc/normal.hpp"
#include "cqpc/parallel.hpp"
#include "cqpc/regressors.hpp"
#include "cqpc/rng.hpp"
#include "cqpc/svg.hpp"
