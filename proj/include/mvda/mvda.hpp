#pragma once

// Umbrella header.

#include "mvda/error.hpp"
#include "mvda/rng.hpp"
#include "mvda/parallel.hpp"
#include "mvda/linalg.hpp"
#include "mvda/dataio.hpp"
#include "mvda/kernels.hpp"
#include "mvda/scatter.hpp"
#include "mvda/gep.hpp"
#include "mvda/subspace.hpp"
#include "mvda/experiment.hpp"
#include "mvda/model.hpp"
#include "mvda/cli.hpp"
