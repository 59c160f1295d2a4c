#pragma once

namespace stob {

/// Caps the number of worker threads used by the linear algebra backend.
/// Counts below 1 are clamped to 1.
void set_thread_cap(int count);

/// Reads the STOB_THREADS environment variable; returns 0 when unset or
/// unparsable.
int thread_cap_from_env();

/// Applies STOB_THREADS if it is set; otherwise leaves the backend default.
void apply_thread_cap_from_env();

}  // namespace stob
