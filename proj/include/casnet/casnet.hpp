// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "casnet/archive.hpp"
#include "casnet/baselines.hpp"
#include "casnet/compressor.hpp"
#include "casnet/dsp.hpp"
#include "casnet/metrics.hpp"
#include "casnet/model.hpp"
#include "casnet/pipeline.hpp"
#include "casnet/scene.hpp"
#include "casnet/transport.hpp"
#include "casnet/wav.hpp"
