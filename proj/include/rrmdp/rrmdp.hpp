#pragma once

// Umbrella header for the regularized robust MDP toolkit.

#include "rrmdp/bellman.hpp"
#include "rrmdp/dataset.hpp"
#include "rrmdp/envs.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/eval.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/policy_gradient.hpp"
#include "rrmdp/rfzi.hpp"
#include "rrmdp/risk.hpp"
#include "rrmdp/rng.hpp"
