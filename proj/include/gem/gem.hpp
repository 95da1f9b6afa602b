#pragma once

// Umbrella header.

#include "gem/bench.hpp"
#include "gem/cli.hpp"
#include "gem/config.hpp"
#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/cache.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/lm/openai_backend.hpp"
#include "gem/lm/toy_backend.hpp"
#include "gem/lm/types.hpp"
#include "gem/metrics.hpp"
#include "gem/oracle.hpp"
#include "gem/perturb.hpp"
#include "gem/pmi.hpp"
#include "gem/preprocess.hpp"
#include "gem/prompts.hpp"
#include "gem/review.hpp"
#include "gem/stats.hpp"
