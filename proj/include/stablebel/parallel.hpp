#pragma once

// Path-level parallelism with a reproducible merge.
//
// Work is cut into fixed-size blocks of paths. Each block accumulates into
// its own slot and the slots are merged in block order after all workers
// finish, so results depend on (seed, n) only and never on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stablebel {

inline constexpr std::size_t kPathBlock = 256;

inline unsigned default_workers() noexcept {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1U : hw;
}

/// Calls fn(block_index, begin, end) for every block of [0, n_items).
template <class BlockFn>
void parallel_blocks(std::size_t n_items, std::size_t block_size, unsigned workers, BlockFn&& fn) {
  const std::size_t n_blocks = (n_items + block_size - 1) / block_size;
  if (n_blocks == 0) return;
  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1U, workers), n_blocks));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        fn(b, b * block_size, std::min(n_items, (b + 1) * block_size));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_blocks);
        return;
      }
    }
  };

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

/// Monte Carlo reduction over n paths.
///
/// `make_workspace()` builds per-block scratch storage; `path_fn(i, acc, ws)`
/// processes path i. `Acc` must be default constructible and provide
/// `merge(const Acc&)`.
template <class Acc, class MakeWorkspace, class PathFn>
Acc block_reduce(std::size_t n, unsigned workers, MakeWorkspace&& make_workspace, PathFn&& path_fn) {
  const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;
  std::vector<Acc> partial(n_blocks);
  parallel_blocks(n, kPathBlock, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    auto workspace = make_workspace();
    for (std::size_t i = begin; i < end; ++i) path_fn(i, partial[b], workspace);
  });
  Acc total{};
  for (const auto& p : partial) total.merge(p);
  return total;
}

/// Evaluates value_fn(i, ws) for every path and stores it at index i.
template <class MakeWorkspace, class ValueFn>
std::vector<double> block_map(std::size_t n, unsigned workers, MakeWorkspace&& make_workspace,
                              ValueFn&& value_fn) {
  std::vector<double> out(n);
  parallel_blocks(n, kPathBlock, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    auto workspace = make_workspace();
    for (std::size_t i = begin; i < end; ++i) out[i] = value_fn(i, workspace);
  });
  return out;
}

struct NoWorkspace {};
inline NoWorkspace make_no_workspace() { return {}; }

}  // namespace stablebel
