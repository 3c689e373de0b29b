#ifndef MEANFLOW_FFT_LOCK_HPP
#define MEANFLOW_FFT_LOCK_HPP

#include <mutex>

namespace meanflow::detail {

/// FFTW's planner is not thread-safe; every fftw_plan_* / fftw_destroy_plan
/// call in this library happens under this lock.
std::mutex& fft_plan_mutex();

} // namespace meanflow::detail

#endif
