#pragma once

// Sparse voxel inference engine with adaptive spatial filtering.

#include "svox/bev.hpp"
#include "svox/box.hpp"
#include "svox/conv.hpp"
#include "svox/core.hpp"
#include "svox/error.hpp"
#include "svox/filter.hpp"
#include "svox/heatmap.hpp"
#include "svox/io.hpp"
#include "svox/ledger.hpp"
#include "svox/norm.hpp"
#include "svox/pipeline.hpp"
#include "svox/predictor.hpp"
#include "svox/rng.hpp"
#include "svox/scene.hpp"
#include "svox/voxelize.hpp"
