// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
