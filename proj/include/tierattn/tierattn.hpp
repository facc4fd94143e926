#pragma once

#include "tierattn/attention.hpp"
#include "tierattn/block_mask.hpp"
#include "tierattn/error.hpp"
#include "tierattn/io.hpp"
#include "tierattn/matrix.hpp"
#include "tierattn/metrics.hpp"
#include "tierattn/presets.hpp"
#include "tierattn/probing.hpp"
#include "tierattn/rng.hpp"
#include "tierattn/shipped_profiles.hpp"
#include "tierattn/stack.hpp"
#include "tierattn/tsa.hpp"
#include "tierattn/vrpr.hpp"
