#pragma once

#include "spdelab/core.hpp"
#include "spdelab/empirical.hpp"
#include "spdelab/gaussian.hpp"
#include "spdelab/harness.hpp"
#include "spdelab/potential.hpp"
#include "spdelab/rates.hpp"
#include "spdelab/simulator.hpp"
#include "spdelab/spectrum.hpp"
#include "spdelab/transport.hpp"
