#pragma once

#include "rcpam/error.hpp"
#include "rcpam/rng.hpp"
#include "rcpam/fft.hpp"
#include "rcpam/link_sim.hpp"
#include "rcpam/esn.hpp"
#include "rcpam/eval.hpp"
#include "rcpam/harness.hpp"
