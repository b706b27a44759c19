#pragma once

#include "core.hpp"
#include "graph.hpp"
#include "spectral.hpp"
#include "gains.hpp"
#include "dynamics.hpp"
#include "sim.hpp"
#include "analysis.hpp"
#include "io.hpp"
#include "scenario.hpp"
#include "run.hpp"
#include "plot.hpp"
