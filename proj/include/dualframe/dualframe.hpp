#pragma once

// Umbrella header: the full estimation library.

#include "dualframe/common.hpp"
#include "dualframe/rng.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/features.hpp"
#include "dualframe/sampling_model.hpp"
#include "dualframe/kernel_ridge.hpp"
#include "dualframe/scores.hpp"
#include "dualframe/projection.hpp"
#include "dualframe/solver.hpp"
#include "dualframe/inference.hpp"
#include "dualframe/nuisance.hpp"
#include "dualframe/dml.hpp"
#include "dualframe/simgen.hpp"
