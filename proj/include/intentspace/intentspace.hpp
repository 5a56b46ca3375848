#pragma once

// Intent-space sequence classifier: intents as continuous points over shared
// matrix bases inside a recurrent model, with frozen-parameter extension for
// unseen intents and entropy-based detection.

#include "intentspace/checkpoint.hpp"
#include "intentspace/convert.hpp"
#include "intentspace/data.hpp"
#include "intentspace/diagnostics.hpp"
#include "intentspace/embeddings.hpp"
#include "intentspace/errors.hpp"
#include "intentspace/eval.hpp"
#include "intentspace/gradcheck.hpp"
#include "intentspace/linalg.hpp"
#include "intentspace/model.hpp"
#include "intentspace/rng.hpp"
#include "intentspace/runconfig.hpp"
#include "intentspace/runner.hpp"
#include "intentspace/trainloop.hpp"
#include "intentspace/training.hpp"
#include "intentspace/unseen.hpp"
