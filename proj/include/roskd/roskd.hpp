// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "roskd/ablation.hpp"
#include "roskd/attack.hpp"
#include "roskd/config.hpp"
#include "roskd/dataset.hpp"
#include "roskd/distill.hpp"
#include "roskd/landscape.hpp"
#include "roskd/loss.hpp"
#include "roskd/matrix.hpp"
#include "roskd/metrics.hpp"
#include "roskd/nn.hpp"
#include "roskd/partition.hpp"
#include "roskd/pipeline.hpp"
#include "roskd/rng.hpp"
#include "roskd/storage.hpp"
#include "roskd/teacher.hpp"
