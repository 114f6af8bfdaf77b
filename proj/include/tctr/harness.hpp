// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tctr/harness/ablate.hpp"
#include "tctr/harness/config.hpp"
#include "tctr/harness/data.hpp"
#include "tctr/harness/evaluate.hpp"
#include "tctr/harness/gradcheck.hpp"
#include "tctr/harness/metrics.hpp"
#include "tctr/harness/model.hpp"
#include "tctr/harness/render.hpp"
#include "tctr/harness/summary.hpp"
#include "tctr/harness/train.hpp"
#include "tctr/numerics/checkpoint.hpp"
