#pragma once

#include "cause_sieve/csv.hpp"
#include "cause_sieve/discover.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/experiments.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/perlin.hpp"
#include "cause_sieve/regress.hpp"
#include "cause_sieve/stattests.hpp"
#include "cause_sieve/synth.hpp"
#include "cause_sieve/verify.hpp"
