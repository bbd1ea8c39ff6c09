#include "rectattn/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rectattn {

namespace {
std::atomic<int> g_override{0};

int env_threads()
{
  const char* env = std::getenv("RECTATTN_THREADS");
  if (!env) return 0;
  const int n = std::atoi(env);
  return n > 0 ? n : 0;
}
}  // namespace

int thread_count()
{
  if (int n = g_override.load(); n > 0) return n;
  if (int n = env_threads(); n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int n) { g_override.store(n > 0 ? n : 0); }

ScopedThreadCount::ScopedThreadCount(int n) : previous_(g_override.load()) { set_thread_count(n); }

ScopedThreadCount::~ScopedThreadCount() { g_override.store(previous_); }

}  // namespace rectattn
