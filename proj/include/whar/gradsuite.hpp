#pragma once

#include <vector>

#include "whar/gradcheck.hpp"

namespace whar {

// Every differentiable op and layer, each as a GradCheck with randomized
// shapes. Functions with deliberate stop-gradients (the moment-matching
// augmenter's statistics) are excluded from finite differencing, since the
// analytic gradient intentionally differs from the full derivative; their
// behavior is pinned by unit tests instead.
std::vector<GradCheck> gradsuite();

}  // namespace whar
