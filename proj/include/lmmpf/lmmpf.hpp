#pragma once

#include "lmmpf/common.hpp"
#include "lmmpf/random.hpp"
#include "lmmpf/ode_models.hpp"
#include "lmmpf/integrators.hpp"
#include "lmmpf/homec.hpp"
#include "lmmpf/state_space.hpp"
#include "lmmpf/particle_filter.hpp"
#include "lmmpf/metrics.hpp"
#include "lmmpf/experiment.hpp"
