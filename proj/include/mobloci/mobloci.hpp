#pragma once

// Umbrella header for the library (the pipeline lives in mobloci/pipeline.hpp).

#include "mobloci/error.hpp"
#include "mobloci/features.hpp"
#include "mobloci/graph.hpp"
#include "mobloci/ingest.hpp"
#include "mobloci/loci.hpp"
#include "mobloci/markov.hpp"
#include "mobloci/mobility_graph.hpp"
#include "mobloci/rng.hpp"
#include "mobloci/version.hpp"
