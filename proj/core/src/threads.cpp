#include "stob/threads.hpp"

#include <cstdlib>
#include <string>

// Provided by OpenBLAS; declared here to avoid depending on a non-standard
// header location.
extern "C" void openblas_set_num_threads(int);

namespace stob {

void set_thread_cap(int count) {
  openblas_set_num_threads(count < 1 ? 1 : count);
}

int thread_cap_from_env() {
  const char* raw = std::getenv("STOB_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    const int v = std::stoi(raw);
    return v < 1 ? 1 : v;
  } catch (const std::exception&) {
    return 0;
  }
}

void apply_thread_cap_from_env() {
  const int cap = thread_cap_from_env();
  if (cap > 0) set_thread_cap(cap);
}

}  // namespace stob
