#pragma once

#include "bsdesign/errors.hpp"
#include "bsdesign/linalg.hpp"
#include "bsdesign/metrics.hpp"
#include "bsdesign/model.hpp"
#include "bsdesign/optimizer.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"
#include "bsdesign/simulation.hpp"
#include "bsdesign/truncated_normal.hpp"
