#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "treecipher/engine.hpp"
#include "treecipher/randgen.hpp"

namespace treecipher {

/// One benchmark replicate: the measured quantities behind the time and
/// log-ratio analyses. wall_time_ns covers the engine run only (generation
/// and parsing excluded).
struct BenchRecord {
  std::uint32_t n = 0;
  std::uint32_t alphabet_size = 0;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::Similar;
  std::string verdict;
  std::uint64_t wall_time_ns = 0;
  double log10_n_final = 0.0;
  double log10_n_equiv = 0.0;
  double r_final = 0.0;
  std::uint64_t map_nodes_calls = 0;
};

struct BenchConfig {
  std::vector<std::uint32_t> sizes;
  std::vector<std::uint32_t> alphabets;
  std::uint32_t replicates = 1;
  Scenario scenario = Scenario::Similar;
  std::uint64_t base_seed = 0;
  unsigned workers = 0;  // 0: $TREECIPHER_WORKERS, else hardware threads
  bool validate = false;
  CipherMode mode = CipherMode::Bijective;
};

/// Per-cell seed: splitmix64 chained over (base_seed, n, alphabet,
/// replicate), so any single cell reproduces in isolation.
std::uint64_t cell_seed(std::uint64_t base_seed, std::uint32_t n,
                        std::uint32_t alphabet, std::uint32_t replicate);

/// Runs the grid on a worker pool. Row content is independent of the
/// parallelism degree; rows come back sorted by (n, alphabet_size, seed).
std::vector<BenchRecord> run_bench(const BenchConfig& config);

inline constexpr const char* kBenchCsvHeader =
    "n,alphabet_size,seed,scenario,verdict,wall_time_ns,log10_N_final,"
    "log10_N_equiv,r_final,map_nodes_calls";

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& rows);

}  // namespace treecipher
