#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>
#include <functional>

namespace pgdd {

// FNV-1a over raw bytes. Used for content hashes of checkpoints and datasets;
// collision resistance against accidents, not adversaries.
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull);

std::string to_hex(uint64_t v);

// Shortest round-trippable decimal form ("%.17g"); the byte-determinism of
// metrics logs and reports hangs on everyone using the same formatter.
std::string fmt_g17(double v);

// Write-then-rename so readers never observe a half-written artifact.
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

// Thread cap resolution: PGDD_THREADS env var wins, else hardware_concurrency.
int thread_budget();

// Deterministic parallel map over [0, n): chunk boundaries depend only on n and
// the worker count is capped by thread_budget(). Work must be index-pure.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace pgdd
