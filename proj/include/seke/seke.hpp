#pragma once
// Umbrella header.

#include "seke/affect.hpp"
#include "seke/annotator.hpp"
#include "seke/config.hpp"
#include "seke/dataset.hpp"
#include "seke/error.hpp"
#include "seke/evaluator.hpp"
#include "seke/http_annotator.hpp"
#include "seke/lexicon.hpp"
#include "seke/manifest.hpp"
#include "seke/pipeline.hpp"
#include "seke/prompt.hpp"
#include "seke/random.hpp"
#include "seke/response.hpp"
#include "seke/samples.hpp"
#include "seke/simlab.hpp"
#include "seke/uamc.hpp"
