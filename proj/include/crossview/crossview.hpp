#pragma once

// Umbrella header pulling in the whole library.

#include "crossview/errors.hpp"
#include "crossview/rng.hpp"
#include "crossview/math.hpp"
#include "crossview/selector.hpp"
#include "crossview/objective.hpp"
#include "crossview/sampling.hpp"
#include "crossview/model.hpp"
#include "crossview/training.hpp"
#include "crossview/evaluation.hpp"
#include "crossview/io.hpp"
#include "crossview/synthetic.hpp"
