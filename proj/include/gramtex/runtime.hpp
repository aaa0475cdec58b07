#pragma once

#include <string_view>

namespace gramtex {

inline constexpr std::string_view kVersion = "0.1.0";

// Applies GRAMTEX_THREADS as the OpenMP worker cap; 0 or unset leaves the default.
// Returns the worker count in effect afterwards.
int configure_threads_from_env();

int max_threads();

}  // namespace gramtex
