#pragma once

#include <popsim/batched.hpp>
#include <popsim/bench.hpp>
#include <popsim/core.hpp>
#include <popsim/crn_compile.hpp>
#include <popsim/dsl.hpp>
#include <popsim/error.hpp>
#include <popsim/gillespie.hpp>
#include <popsim/report.hpp>
#include <popsim/rng.hpp>
#include <popsim/scheduler.hpp>
