#pragma once

// Scalar type of the numeric engine. The library is built twice: the default
// float build used for training, and a double build (BAST_REAL_DOUBLE) used by
// the finite-difference gradient checks. The inline namespace keeps the two
// variants link-distinct.

#ifdef BAST_REAL_DOUBLE
#define BAST_NAMESPACE_BEGIN \
  namespace bast {           \
  inline namespace f64 {
#else
#define BAST_NAMESPACE_BEGIN \
  namespace bast {           \
  inline namespace f32 {
#endif
#define BAST_NAMESPACE_END \
  }                        \
  }

BAST_NAMESPACE_BEGIN

#ifdef BAST_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

BAST_NAMESPACE_END
