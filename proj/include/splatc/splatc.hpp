// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatc/config.hpp"
#include "splatc/core.hpp"
#include "splatc/error.hpp"
#include "splatc/image.hpp"
#include "splatc/metrics.hpp"
#include "splatc/optimizer.hpp"
#include "splatc/parallel.hpp"
#include "splatc/pg_sampler.hpp"
#include "splatc/renderer.hpp"
#include "splatc/report.hpp"
#include "splatc/splat_io.hpp"
#include "splatc/synth.hpp"
#include "splatc/voxel_merger.hpp"
#include "splatc/wasserstein.hpp"
