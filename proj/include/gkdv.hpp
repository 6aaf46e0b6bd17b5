#pragma once

// Umbrella header.
#include "gkdv/errors.hpp"
#include "gkdv/grid.hpp"
#include "gkdv/ground_state.hpp"
#include "gkdv/scorer.hpp"
#include "gkdv/smooth.hpp"
#include "gkdv/profile.hpp"
#include "gkdv/localized.hpp"
#include "gkdv/modulation.hpp"
#include "gkdv/diagnostics.hpp"
#include "gkdv/rng.hpp"
#include "gkdv/dynamics.hpp"
#include "gkdv/io.hpp"
#include "gkdv/experiment.hpp"
#include "gkdv/verify.hpp"
