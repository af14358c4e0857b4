#pragma once

#include "fsvar/bandlin.hpp"
#include "fsvar/error.hpp"
#include "fsvar/gibbs.hpp"
#include "fsvar/intlike.hpp"
#include "fsvar/marglike.hpp"
#include "fsvar/model.hpp"
#include "fsvar/parallel.hpp"
#include "fsvar/random.hpp"
#include "fsvar/simulate.hpp"
#include "fsvar/stats.hpp"
#include "fsvar/structural.hpp"
#include "fsvar/tmvn.hpp"
