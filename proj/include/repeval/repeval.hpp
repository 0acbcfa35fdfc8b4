#pragma once

#include "repeval/error.hpp"
#include "repeval/geometry.hpp"
#include "repeval/formats.hpp"
#include "repeval/metrics.hpp"
#include "repeval/matching.hpp"
#include "repeval/evaluate.hpp"
#include "repeval/stats.hpp"
#include "repeval/synth.hpp"
#include "repeval/harness.hpp"
