#pragma once
// Convenience include for the whole library.

#include "taco/eval.hpp"
#include "taco/kg.hpp"
#include "taco/linalg.hpp"
#include "taco/model.hpp"
#include "taco/parallel.hpp"
#include "taco/rcg.hpp"
#include "taco/rng.hpp"
#include "taco/stats.hpp"
#include "taco/subgraph.hpp"
#include "taco/train.hpp"
