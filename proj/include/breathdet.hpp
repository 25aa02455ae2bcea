#pragma once

#include "breathdet/detectors.hpp"
#include "breathdet/errors.hpp"
#include "breathdet/harness.hpp"
#include "breathdet/io.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"
#include "breathdet/simulator.hpp"
#include "breathdet/vmp.hpp"
