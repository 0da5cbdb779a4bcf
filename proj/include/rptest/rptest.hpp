// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rptest/adaptive.hpp"
#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/krr.hpp"
#include "rptest/random.hpp"
#include "rptest/simulate.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"
#include "rptest/stats.hpp"
#include "rptest/testing.hpp"
