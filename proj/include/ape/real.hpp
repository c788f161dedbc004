// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The library is compiled twice: the default 32-bit build used by the tools,
// and a 64-bit build used by tests that need tight finite-difference bounds.
// Each build lives in its own inline namespace so both can link into one
// binary without symbol clashes.

#ifdef APE_REAL_F64
#define APE_PRECISION_NS f64
#else
#define APE_PRECISION_NS f32
#endif

#define APE_BEGIN_NAMESPACE \
  namespace ape {           \
  inline namespace APE_PRECISION_NS {
#define APE_END_NAMESPACE \
  }                       \
  }

APE_BEGIN_NAMESPACE

#ifdef APE_REAL_F64
using real = double;
inline constexpr bool kRealIsF64 = true;
#else
using real = float;
inline constexpr bool kRealIsF64 = false;
#endif

APE_END_NAMESPACE
