#pragma once

#include "config.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "jump_engine.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "propagator.hpp"
#include "rates.hpp"
#include "rng.hpp"
#include "run.hpp"
