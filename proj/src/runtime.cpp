#include "gramtex/runtime.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "gramtex/error.hpp"

namespace gramtex {

int configure_threads_from_env() {
  if (const char* env = std::getenv("GRAMTEX_THREADS"); env && *env) {
    int n = 0;
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GRAMTEX_THREADS must be a non-negative integer, got \"") + env + "\"");
    }
    if (n < 0) throw ConfigError(std::string("GRAMTEX_THREADS must be a non-negative integer, got \"") + env + "\"");
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace gramtex
