// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oodk/benchmark.hpp"
#include "oodk/common.hpp"
#include "oodk/data_io.hpp"
#include "oodk/embedding_store.hpp"
#include "oodk/energy.hpp"
#include "oodk/gda.hpp"
#include "oodk/image.hpp"
#include "oodk/linalg.hpp"
#include "oodk/metrics.hpp"
#include "oodk/model.hpp"
#include "oodk/nda.hpp"
#include "oodk/rng.hpp"
#include "oodk/tail_sampler.hpp"
#include "oodk/trainer.hpp"
