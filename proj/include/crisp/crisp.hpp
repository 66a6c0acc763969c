#pragma once

#include "crisp/error.hpp"
#include "crisp/var_set.hpp"
#include "crisp/random.hpp"
#include "crisp/vtree.hpp"
#include "crisp/circuit.hpp"
#include "crisp/evaluate.hpp"
#include "crisp/builder.hpp"
#include "crisp/algebra.hpp"
#include "crisp/constraints.hpp"
#include "crisp/queries.hpp"
#include "crisp/gating.hpp"
#include "crisp/data.hpp"
#include "crisp/interactive.hpp"
#include "crisp/oracle.hpp"
