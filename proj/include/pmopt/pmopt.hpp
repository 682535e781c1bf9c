#pragma once

#include "pmopt/config.hpp"
#include "pmopt/weibull.hpp"
#include "pmopt/state.hpp"
#include "pmopt/dynamics.hpp"
#include "pmopt/relax.hpp"
#include "pmopt/random.hpp"
#include "pmopt/parallel.hpp"
#include "pmopt/dsearch.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/app.hpp"
#include "pmopt/tune.hpp"
#include "pmopt/io.hpp"
#include "pmopt/runner.hpp"
