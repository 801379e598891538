#pragma once

#include "oculomix/cohort.hpp"
#include "oculomix/cohort_io.hpp"
#include "oculomix/config.hpp"
#include "oculomix/error.hpp"
#include "oculomix/harness.hpp"
#include "oculomix/losses.hpp"
#include "oculomix/metrics.hpp"
#include "oculomix/msda.hpp"
#include "oculomix/predictor.hpp"
#include "oculomix/rng.hpp"
#include "oculomix/sampler.hpp"
#include "oculomix/synth.hpp"
