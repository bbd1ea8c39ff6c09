#pragma once

namespace rectattn {

/// Threads used by parallel kernels. An explicit set_thread_count() wins;
/// otherwise RECTATTN_THREADS is read (0 or unset = OpenMP default).
int thread_count();

/// 0 restores the environment/default behaviour.
void set_thread_count(int n);

class ScopedThreadCount {
 public:
  explicit ScopedThreadCount(int n);
  ~ScopedThreadCount();
  ScopedThreadCount(const ScopedThreadCount&) = delete;
  ScopedThreadCount& operator=(const ScopedThreadCount&) = delete;

 private:
  int previous_;
};

}  // namespace rectattn
