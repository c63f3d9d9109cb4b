// Acceptance gates for the tree ciphering reduction library. Each gate
// prints one [PASS]/[FAIL] line; the process exits with the number of
// failed gates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "treecipher/ahu.hpp"
#include "treecipher/bench.hpp"
#include "treecipher/engine.hpp"
#include "treecipher/oracle.hpp"
#include "treecipher/randgen.hpp"
#include "treecipher/tree.hpp"
#include "test_util.hpp"

using namespace treecipher;
using Clock = std::chrono::steady_clock;

namespace {

struct GateResult {
  int number;
  std::string name;
  bool ok;
  std::string detail;
};

std::vector<GateResult> g_gates;

void gate(int number, std::string name, bool ok, std::string detail) {
  g_gates.push_back({number, std::move(name), ok, std::move(detail)});
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

const char* kExampleLeft = "B(A(A,B),A(C,C),C)";
const char* kExampleRight = "β(α(α,β),α(γ,γ),γ)";

// --------------------------------------------------------------------------

void criterion1_golden_trace() {
  LabeledTree t1 = parse(kExampleLeft), t2 = parse(kExampleRight);
  Outcome out = run(t1, t2);
  bool ok = out.verdict == Outcome::Verdict::Undecided;

  const std::uint64_t expected[] = {40320, 144, 144, 48, 2};
  ok = ok && out.stages.size() == 5;
  if (ok)
    for (int i = 0; i < 5; ++i)
      ok = ok && out.stages[i].exact && *out.stages[i].exact == expected[i];

  std::vector<std::pair<NodeId, NodeId>> want{{0, 0}, {1, 1}, {2, 2},
                                              {3, 3}, {4, 4}, {7, 7}};
  ok = ok && out.phi == want;

  std::map<std::string, std::string> f(out.f.begin(), out.f.end());
  ok = ok && f == std::map<std::string, std::string>{
                      {"A", "α"}, {"B", "β"}, {"C", "γ"}};

  std::size_t live = 0, size2 = 0;
  if (out.residual)
    for (const Bag& b : out.residual->bags())
      if (b.alive) {
        ++live;
        size2 += b.left.size() == 2 && b.right.size() == 2;
      }
  ok = ok && live == 1 && size2 == 1;

  double best_ms = 1e9;
  for (int rep = 0; rep < 20; ++rep) {
    auto t0 = Clock::now();
    Outcome timed = run(t1, t2);
    double ms = seconds_since(t0) * 1e3;
    best_ms = std::min(best_ms, ms);
    ok = ok && timed.verdict == Outcome::Verdict::Undecided;
  }
  ok = ok && best_ms < 1.0;
  gate(1, "golden trace of the worked example", ok,
       fmt("stages 40320/144/144/48/2, best run %.3f ms", best_ms));
}

void criterion2_n_equiv_goldens() {
  bool ok = n_equiv(parse("r(i(l,l),i(l,l),l)")).exact == 8;
  ok = ok && n_equiv(parse(kExampleLeft)).exact == 8;
  ok = ok && n_equiv(parse("A")).exact == 1;
  for (std::uint32_t len = 2; len <= 30; ++len) {
    std::string text;
    for (std::uint32_t i = 0; i + 1 < len; ++i) text += "p(";
    text += 'p';
    text.append(len - 1, ')');
    ok = ok && n_equiv(parse(text)).exact == 1;
  }
  gate(2, "exact isomorphism counts on the reference shapes", ok, "");
}

void criterion3_oracle_count_equivalence() {
  auto t0 = Clock::now();
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    GenConfig cfg{2 + static_cast<std::uint32_t>(seed % 6), 1, seed};
    LabeledTree t = random_recursive_tree(cfg);
    LabeledTree s = shuffled_copy(t, splitmix64(seed));
    Coloring col = color_trees({&t, &s});
    std::size_t witnesses = 0;
    enumerate_isomorphisms(t, s, col, [&](const IsomorphismWitness&) {
      ++witnesses;
      return true;
    });
    ok = ok && BigInt(witnesses) == n_equiv(t, col).exact;
  }
  double secs = seconds_since(t0);
  ok = ok && secs < 30.0;
  gate(3, "witness count equals the counting formula (500 trees, n<=7)", ok,
       fmt("%.2f s", secs));
}

void criterion4_decision_equivalence() {
  auto t0 = Clock::now();
  bool ok = true;
  int undecided = 0, negatives = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    std::uint32_t n = 2 + static_cast<std::uint32_t>(i % 7);
    std::uint32_t alpha = 1 + static_cast<std::uint32_t>(i % 3);
    Scenario sc =
        (i % 2 && alpha > 1) ? Scenario::Perturbed : Scenario::Similar;
    auto [t1, t2] = testutil::robust_pair({n, alpha, 9000 + i}, sc);
    Outcome out = run(t1, t2);
    bool verdict;
    if (out.verdict == Outcome::Verdict::Undecided) {
      ++undecided;
      verdict = complete_backtracking(*out.residual).isomorphic();
    } else {
      verdict = out.isomorphic();
    }
    bool truth = decide_brute(t1, t2).isomorphic;
    ok = ok && verdict == truth;
    negatives += !truth;
  }
  double secs = seconds_since(t0);
  ok = ok && secs < 60.0 && undecided > 0 && negatives > 0;
  gate(4, "engine+backtracking equals brute force (1000 pairs, n<=8)", ok,
       fmt("%.2f s, %d undecided, %d negatives", secs, undecided, negatives));
}

LabeledTree relabeled_copy(const LabeledTree& t, std::uint64_t seed) {
  LabeledTree out = shuffled_copy(t, seed);
  std::vector<LabelId> used = out.alphabet();
  std::vector<std::string> names;
  for (LabelId id : used) names.push_back(out.symbol(id));
  std::uint64_t x = seed;
  for (std::size_t i = names.size(); i > 1; --i) {
    x = splitmix64(x);
    std::swap(names[i - 1], names[x % i]);
  }
  std::vector<std::string> new_labels(out.size());
  for (NodeId u = 0; u < out.size(); ++u)
    for (std::size_t i = 0; i < used.size(); ++i)
      if (out.label(u) == used[i]) new_labels[u] = "q" + names[i];
  for (NodeId u = 0; u < out.size(); ++u) out.relabel(u, new_labels[u]);
  return out;
}

void criterion5_equivalence_relation() {
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    LabeledTree t = random_labeled_tree(
        {3 + static_cast<std::uint32_t>(seed % 6),
         1 + static_cast<std::uint32_t>(seed % 3), 777 + seed});
    ok = ok && decide_brute(t, t).isomorphic;  // reflexivity
  }
  int witness_pairs = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GenConfig cfg{3 + static_cast<std::uint32_t>(seed % 5),
                  1 + static_cast<std::uint32_t>(seed % 3), 31000 + seed};
    LabeledTree t1 = random_labeled_tree(cfg);
    LabeledTree t2 = relabeled_copy(t1, seed + 1);
    LabeledTree t3 = relabeled_copy(t2, seed + 2);
    bool ab = decide_brute(t1, t2).isomorphic;
    bool ba = decide_brute(t2, t1).isomorphic;
    bool bc = decide_brute(t2, t3).isomorphic;
    bool ac = decide_brute(t1, t3).isomorphic;
    ok = ok && ab && ba && bc && ac;  // chained relabelings stay related
    ok = ok && (ab == ba);            // symmetry
    ok = ok && (!(ab && bc) || ac);   // transitivity

    if (seed % 10) continue;  // witness-level checks on a subsample
    Coloring col = color_trees({&t1, &t2, &t3});
    auto enc12 = enumerate_all_isomorphisms(t1, t2, col);
    auto enc23 = enumerate_all_isomorphisms(t2, t3, col);
    for (const auto& phi : enc12) {
      if (!is_ciphering(phi, t1, t2, CipherMode::Bijective)) continue;
      auto r_phi = induced_relation(t1, t2, phi.phi);
      auto r_inv = induced_relation(t2, t1, invert_witness(phi).phi);
      std::set<std::pair<std::string, std::string>> flipped;
      for (const auto& [x, y] : r_phi) flipped.insert({y, x});
      ok = ok && flipped == r_inv;  // R_phi^-1 = R_{phi^-1}
      for (const auto& psi : enc23) {
        if (!is_ciphering(psi, t2, t3, CipherMode::Bijective)) continue;
        ++witness_pairs;
        auto comp = compose_witness(phi, psi);
        auto lhs = induced_relation(t1, t3, comp.phi);
        auto r_psi = induced_relation(t2, t3, psi.phi);
        std::set<std::pair<std::string, std::string>> rhs;
        for (const auto& [x, y] : r_phi)
          for (const auto& [y2, z] : r_psi)
            if (y == y2) rhs.insert({x, z});
        ok = ok && lhs == rhs;  // R_{psi.phi} = R_psi . R_phi
        ok = ok && is_ciphering(comp, t1, t3, CipherMode::Bijective);
      }
    }
  }
  ok = ok && witness_pairs > 0;
  gate(5, "equivalence-relation properties and witness lemmas", ok,
       fmt("%d composed witness pairs", witness_pairs));
}

void criterion7_linearity(std::vector<BenchRecord>& all_rows) {
  BenchConfig cfg;
  cfg.sizes = {250, 500, 1000, 2000, 4000};
  cfg.alphabets = {5};
  cfg.replicates = 50;
  cfg.scenario = Scenario::Similar;
  cfg.base_seed = 12001;
  cfg.workers = 1;  // sequential timing
  run_bench(cfg);   // warm-up pass (allocator, caches)
  std::vector<BenchRecord> rows = run_bench(cfg);
  all_rows.insert(all_rows.end(), rows.begin(), rows.end());

  std::map<std::uint32_t, std::pair<double, int>> acc;
  for (const BenchRecord& r : rows) {
    acc[r.n].first += static_cast<double>(r.wall_time_ns);
    acc[r.n].second += 1;
  }
  std::vector<double> xs, ys;
  for (auto& [n, sum_count] : acc) {
    xs.push_back(n);
    ys.push_back(sum_count.first / sum_count.second);
  }
  double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxx = 0, sxy = 0, sst = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    sst += (ys[i] - my) * (ys[i] - my);
  }
  double slope = sxy / sxx, intercept = my - slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double e = ys[i] - (intercept + slope * xs[i]);
    ssr += e * e;
  }
  double r2 = sst > 0 ? 1.0 - ssr / sst : 1.0;
  double mean2000 = acc[2000].first / acc[2000].second;
  double mean4000 = acc[4000].first / acc[4000].second;
  double ratio = mean4000 / mean2000;
  bool ok = r2 >= 0.95 && ratio <= 2.5;
  gate(7, "mean runtime grows linearly on similar pairs", ok,
       fmt("R^2=%.4f, t(4000)/t(2000)=%.2f, mean t(4000)=%.3f ms", r2, ratio,
           mean4000 / 1e6));
}

void criterion8_negative_log_ratio(std::vector<BenchRecord>& all_rows) {
  auto grid = [&](std::uint32_t n) {
    BenchConfig cfg;
    cfg.sizes = {n};
    cfg.alphabets = {5};
    cfg.replicates = 500;
    cfg.scenario = Scenario::Similar;
    cfg.base_seed = 471100 + n;
    cfg.validate = true;
    return run_bench(cfg);
  };
  std::vector<BenchRecord> r100 = grid(100), r400 = grid(400);
  all_rows.insert(all_rows.end(), r100.begin(), r100.end());
  all_rows.insert(all_rows.end(), r400.begin(), r400.end());

  int negative = 0;
  std::vector<double> v100, v400;
  for (const BenchRecord& r : r100) {
    negative += r.r_final < 0;
    v100.push_back(r.r_final);
  }
  for (const BenchRecord& r : r400) v400.push_back(r.r_final);
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  double med100 = median(v100), med400 = median(v400);
  bool ok = negative >= 495 && med400 < med100;  // >= 99% of 500
  gate(8, "final log-ratio is negative and improves with size", ok,
       fmt("%d/500 negative at n=100, median r: %.2f (n=100) vs %.2f (n=400)",
           negative, med100, med400));
}

void criterion9_magnitude_check() {
  std::vector<double> logs;
  logs.reserve(10000);
  BigInt sum = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    LabeledTree t = random_recursive_tree({100, 1, 50000 + seed});
    NEquiv ne = n_equiv(t);
    logs.push_back(ne.log10);
    sum += ne.exact;
  }
  std::sort(logs.begin(), logs.end());
  double median_log = logs[logs.size() / 2];
  double mean = (sum / 10000).convert_to<double>();
  bool ok =
      median_log >= std::log10(2.21e4) && median_log <= std::log10(2.21e6);
  gate(9, "median isomorphism count at n=100 matches the reported magnitude",
       ok,
       fmt("median N=10^%.3f (band 10^%.2f..10^%.2f), mean ~%.3g (reported, "
           "not gated)",
           median_log, std::log10(2.21e4), std::log10(2.21e6), mean));
}

void criterion10_split_accounting() {
  RunOptions opts;
  opts.record_split_events = true;
  bool ok = true;
  int events = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::uint32_t alpha = seed % 2 ? 2 : 5;
    auto [t1, t2] =
        scenario_pair({60, alpha, 61000 + seed}, Scenario::Similar);
    Outcome out = run(t1, t2, opts);
    for (const SplitEvent& ev : out.split_events) {
      ++events;
      double delta = ev.log10_before - ev.log10_after;
      double predicted = log10_binomial(ev.p + ev.q, ev.p);
      if (ev.collection) {
        double denom =
            ev.p == ev.q
                ? std::log10(double(ev.count_p + 1)) +
                      std::log10(double(ev.count_p + 2))
                : std::log10(double(ev.count_p + 1)) +
                      std::log10(double(ev.count_q + 1));
        predicted += std::log10(double(ev.count_pq)) - denom;
      }
      worst = std::max(worst, std::abs(delta - predicted));
      ok = ok && std::abs(delta - predicted) <= 1e-9;
    }
  }
  ok = ok && events > 0;
  gate(10, "every split changes log10 N by its predicted factor", ok,
       fmt("%d events, worst deviation %.2e", events, worst));
}

void criterion6_call_bound(const std::vector<BenchRecord>& all_rows) {
  bool ok = !all_rows.empty();
  std::uint64_t worst_calls = 0;
  for (const BenchRecord& r : all_rows) {
    ok = ok && r.map_nodes_calls <= r.n;
    worst_calls = std::max(worst_calls, r.map_nodes_calls);
  }
  gate(6, "map_nodes call count never exceeds the tree size", ok,
       fmt("%zu rows, max calls %llu", all_rows.size(),
           static_cast<unsigned long long>(worst_calls)));
}

void criterion11_monotonicity_and_validator(
    std::vector<BenchRecord>& all_rows) {
  bool ok = true;
  int runs = 0;
  RunOptions opts;
  opts.validate_each_stage = true;
  opts.exact_digit_cap = 0;
  for (std::uint32_t n : {50u, 100u, 200u}) {
    for (std::uint32_t alpha : {2u, 5u, 10u, 26u}) {
      for (Scenario sc : {Scenario::Similar, Scenario::Perturbed}) {
        for (std::uint32_t rep = 0; rep < 15; ++rep) {
          GenConfig cfg{n, alpha, cell_seed(81000, n, alpha, rep)};
          auto [t1, t2] = testutil::robust_pair(cfg, sc);
          try {
            Outcome out = run(t1, t2, opts);
            for (std::size_t i = 1; i < out.stages.size(); ++i)
              ok = ok && out.stages[i].log10_n <= out.stages[i - 1].log10_n;
            BenchRecord rec;
            rec.n = n;
            rec.alphabet_size = alpha;
            rec.seed = cfg.seed;
            rec.scenario = sc;
            rec.verdict = to_string(out.verdict);
            rec.log10_n_final = out.n_final.log10;
            rec.log10_n_equiv = out.log10_n_equiv;
            rec.r_final = out.r_final;
            rec.map_nodes_calls = out.map_nodes_calls;
            all_rows.push_back(rec);
            ++runs;
          } catch (const std::logic_error&) {
            ok = false;  // validator violation
          }
        }
      }
    }
  }
  gate(11, "stage sizes are non-increasing and the validator stays clean", ok,
       fmt("%d validated runs", runs));
}

}  // namespace

int main() {
  std::printf("treecipher acceptance suite\n");
  auto t0 = Clock::now();

  criterion1_golden_trace();
  criterion2_n_equiv_goldens();
  criterion3_oracle_count_equivalence();
  criterion4_decision_equivalence();
  criterion5_equivalence_relation();

  std::vector<BenchRecord> all_rows;
  criterion7_linearity(all_rows);
  criterion8_negative_log_ratio(all_rows);
  criterion9_magnitude_check();
  criterion10_split_accounting();
  criterion11_monotonicity_and_validator(all_rows);
  criterion6_call_bound(all_rows);

  std::sort(g_gates.begin(), g_gates.end(),
            [](const GateResult& a, const GateResult& b) {
              return a.number < b.number;
            });
  int failures = 0;
  for (const GateResult& g : g_gates) {
    std::printf("[%s] criterion %2d: %s%s%s\n", g.ok ? "PASS" : "FAIL",
                g.number, g.name.c_str(), g.detail.empty() ? "" : " -- ",
                g.detail.c_str());
    failures += !g.ok;
  }
  std::printf("%s: %d criterion(s) failed, total %.1f s\n",
              failures ? "FAIL" : "OK", failures, seconds_since(t0));
  return failures;
}
