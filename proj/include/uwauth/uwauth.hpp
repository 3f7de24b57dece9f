#pragma once

#include "uwauth/analysis.hpp"
#include "uwauth/auth.hpp"
#include "uwauth/bench.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/config.hpp"
#include "uwauth/csv.hpp"
#include "uwauth/errors.hpp"
#include "uwauth/experiment.hpp"
#include "uwauth/features.hpp"
#include "uwauth/ggmix.hpp"
#include "uwauth/numeric.hpp"
#include "uwauth/pdp.hpp"
#include "uwauth/random.hpp"
