#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "treecipher/bench.hpp"
#include "treecipher/engine.hpp"
#include "treecipher/oracle.hpp"
#include "treecipher/randgen.hpp"
#include "treecipher/tree.hpp"

namespace tc = treecipher;

namespace {

constexpr int kExitIsomorphic = 0;
constexpr int kExitNotIsomorphic = 1;
constexpr int kExitUndecided = 2;
constexpr int kExitInputError = 3;

tc::LabeledTree load_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return tc::parse_any(buf.str());
}

tc::CipherMode parse_mode(const std::string& mode) {
  if (mode == "bijective") return tc::CipherMode::Bijective;
  if (mode == "identity") return tc::CipherMode::Identity;
  throw std::runtime_error("unknown mode: " + mode);
}

tc::Scenario parse_scenario(const std::string& s) {
  if (s == "similar") return tc::Scenario::Similar;
  if (s == "perturbed") return tc::Scenario::Perturbed;
  throw std::runtime_error("unknown scenario: " + s);
}

void print_outcome_text(const tc::Outcome& out) {
  std::cout << "verdict: " << tc::to_string(out.verdict) << '\n';
  if (out.reason) std::cout << "reason: " << tc::to_string(*out.reason) << '\n';
  if (out.verdict != tc::Outcome::Verdict::NotIsomorphic) {
    std::cout << "phi pairs: " << out.phi.size() << '\n';
    std::cout << "f:";
    for (const auto& [a, b] : out.f) std::cout << ' ' << a << "->" << b;
    std::cout << '\n';
  }
  std::cout << "log10_N_final: " << out.n_final.log10 << '\n';
  std::cout << "log10_N_equiv: " << out.log10_n_equiv << '\n';
  std::cout << "r_final: " << out.r_final << '\n';
  std::cout << "stages:";
  for (const auto& s : out.stages)
    std::cout << ' ' << s.name << '=' << s.log10_n;
  std::cout << '\n';
}

int cmd_decide(const std::string& path1, const std::string& path2,
               const std::string& mode, bool complete, bool json) {
  tc::LabeledTree t1 = load_tree(path1);
  tc::LabeledTree t2 = load_tree(path2);
  tc::RunOptions opts;
  opts.mode = parse_mode(mode);
  tc::Outcome out = tc::run(t1, t2, opts);
  if (out.verdict == tc::Outcome::Verdict::Undecided && complete) {
    tc::Outcome done = tc::complete_backtracking(*out.residual);
    out.verdict = done.verdict;
    out.reason = done.reason;
    out.phi = std::move(done.phi);
    out.f = std::move(done.f);
    out.residual.reset();
  }
  if (json)
    std::cout << tc::outcome_to_json(out, 2) << '\n';
  else
    print_outcome_text(out);
  switch (out.verdict) {
    case tc::Outcome::Verdict::Isomorphic: return kExitIsomorphic;
    case tc::Outcome::Verdict::NotIsomorphic: return kExitNotIsomorphic;
    case tc::Outcome::Verdict::Undecided: return kExitUndecided;
  }
  return kExitInputError;
}

int cmd_reduce(const std::string& path1, const std::string& path2,
               const std::string& mode, bool json) {
  tc::LabeledTree t1 = load_tree(path1);
  tc::LabeledTree t2 = load_tree(path2);
  tc::RunOptions opts;
  opts.mode = parse_mode(mode);
  tc::Outcome out = tc::run(t1, t2, opts);
  if (json) {
    std::string sep;
    std::cout << "{\"verdict\":\"" << tc::to_string(out.verdict)
              << "\",\"stages\":[";
    for (const auto& s : out.stages) {
      std::cout << sep << "{\"name\":\"" << s.name
                << "\",\"log10_N\":" << s.log10_n;
      if (s.exact) std::cout << ",\"N\":\"" << s.exact->str() << '"';
      std::cout << '}';
      sep = ",";
    }
    std::cout << "]}\n";
  } else {
    for (const auto& s : out.stages) {
      std::cout << s.name << ": log10_N=" << s.log10_n;
      if (s.exact) std::cout << " N=" << s.exact->str();
      std::cout << '\n';
    }
    std::cout << "verdict: " << tc::to_string(out.verdict) << '\n';
  }
  return 0;
}

int cmd_gen(std::uint32_t n, std::uint32_t alphabet, std::uint64_t seed,
            const std::string& scenario, const std::string& out1,
            const std::string& out2) {
  tc::GenConfig cfg{n, alphabet, seed};
  auto [t1, t2] = tc::scenario_pair(cfg, parse_scenario(scenario));
  std::ofstream f1(out1, std::ios::binary), f2(out2, std::ios::binary);
  if (!f1 || !f2) throw std::runtime_error("cannot write output files");
  f1 << tc::serialize(t1) << '\n';
  f2 << tc::serialize(t2) << '\n';
  return 0;
}

int cmd_bench(const std::vector<std::uint32_t>& sizes,
              const std::vector<std::uint32_t>& alphabets,
              std::uint32_t replicates, const std::string& scenario,
              std::uint64_t seed, const std::string& out_path,
              unsigned workers) {
  tc::BenchConfig cfg;
  cfg.sizes = sizes;
  cfg.alphabets = alphabets;
  cfg.replicates = replicates;
  cfg.scenario = parse_scenario(scenario);
  cfg.base_seed = seed;
  cfg.workers = workers;
  std::vector<tc::BenchRecord> rows = tc::run_bench(cfg);
  if (out_path.empty() || out_path == "-") {
    tc::write_bench_csv(std::cout, rows);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    tc::write_bench_csv(out, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "treecipher: search-space reduction and decision for the tree "
      "ciphering isomorphism problem on unordered labeled trees"};
  app.require_subcommand(1);

  std::string path1, path2, mode = "bijective", scenario = "similar";
  bool complete = false, json = false;

  CLI::App* decide = app.add_subcommand(
      "decide", "decide whether two trees are isomorphic up to ciphering");
  decide->add_option("tree1", path1, "first tree file (text or JSON)")
      ->required();
  decide->add_option("tree2", path2, "second tree file")->required();
  decide->add_option("--mode", mode, "cipher mode: bijective|identity")
      ->default_str("bijective");
  decide->add_flag("--complete", complete,
                   "resolve an undecided reduction by backtracking");
  decide->add_flag("--json", json, "emit the outcome as JSON");

  CLI::App* reduce = app.add_subcommand(
      "reduce", "report the stage-by-stage search-space metrics");
  reduce->add_option("tree1", path1, "first tree file")->required();
  reduce->add_option("tree2", path2, "second tree file")->required();
  reduce->add_option("--mode", mode, "cipher mode: bijective|identity")
      ->default_str("bijective");
  reduce->add_flag("--json", json, "emit JSON");

  std::uint32_t gen_n = 1, gen_alpha = 1;
  std::uint64_t gen_seed = 0;
  std::string out1 = "tree1.txt", out2 = "tree2.txt";
  CLI::App* gen = app.add_subcommand("gen", "generate a tree pair");
  gen->add_option("--n", gen_n, "tree size")->required();
  gen->add_option("--alphabet", gen_alpha, "alphabet size")->required();
  gen->add_option("--seed", gen_seed, "seed")->default_val(0);
  gen->add_option("--scenario", scenario, "similar|perturbed")
      ->default_str("similar");
  gen->add_option("--out1", out1, "first output file");
  gen->add_option("--out2", out2, "second output file");

  std::vector<std::uint32_t> sizes{100, 200, 400};
  std::vector<std::uint32_t> alphabets{2, 5, 10, 26};
  std::uint32_t replicates = 10;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  unsigned workers = 0;
  CLI::App* bench = app.add_subcommand(
      "bench", "run the benchmark grid and emit one CSV row per replicate");
  bench->add_option("--sizes", sizes, "tree sizes");
  bench->add_option("--alphabets", alphabets, "alphabet sizes");
  bench->add_option("--replicates", replicates, "replicates per cell");
  bench->add_option("--scenario", scenario, "similar|perturbed")
      ->default_str("similar");
  bench->add_option("--seed", bench_seed, "base seed");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");
  bench->add_option("--workers", workers,
                    "worker threads (default: $TREECIPHER_WORKERS or all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  }

  try {
    if (decide->parsed()) return cmd_decide(path1, path2, mode, complete, json);
    if (reduce->parsed()) return cmd_reduce(path1, path2, mode, json);
    if (gen->parsed())
      return cmd_gen(gen_n, gen_alpha, gen_seed, scenario, out1, out2);
    if (bench->parsed())
      return cmd_bench(sizes, alphabets, replicates, scenario, bench_seed,
                       bench_out, workers);
  } catch (const tc::ParseError& e) {
    std::cerr << "error: " << e.what() << " (byte offset " << e.offset()
              << ")\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}
