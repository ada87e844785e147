// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pdsim/cluster.hpp"
#include "pdsim/config.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/decode_flow.hpp"
#include "pdsim/engine.hpp"
#include "pdsim/experiment.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/proxy.hpp"
#include "pdsim/report.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/types.hpp"
#include "pdsim/workload.hpp"
