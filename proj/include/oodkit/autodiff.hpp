// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "oodkit/autodiff/conv.hpp"
#include "oodkit/autodiff/grad.hpp"
#include "oodkit/autodiff/gradcheck.hpp"
#include "oodkit/autodiff/ops.hpp"
#include "oodkit/autodiff/tape.hpp"
