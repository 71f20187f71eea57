// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "straggler/balancer.hpp"
#include "straggler/dep_graph.hpp"
#include "straggler/error.hpp"
#include "straggler/log.hpp"
#include "straggler/metrics.hpp"
#include "straggler/parallel.hpp"
#include "straggler/report.hpp"
#include "straggler/rootcause.hpp"
#include "straggler/synthgen.hpp"
#include "straggler/trace.hpp"
#include "straggler/trace_io.hpp"
#include "straggler/whatif.hpp"
