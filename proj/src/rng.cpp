#include "evd/rng.hpp"

#include <cmath>

// Header-only in practice; this TU exists so the library always has the
// symbol home if the inline definitions are ever moved out.
namespace evd {}
