// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <s24/matrix_io.hpp>
#include <s24/rng.hpp>
#include <s24/train/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace s24::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string checksum(const std::vector<float> &values) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (float v : values) {
    unsigned char b[sizeof(float)];
    std::memcpy(b, &v, sizeof b);
    for (unsigned char c : b) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::vector<float> to_vector(const DenseMatrix &m) { return {m.data().begin(), m.data().end()}; }

template <class F> std::uint64_t median_ns(int warmup, int iters, F &&f) {
  for (int i = 0; i < warmup; ++i)
    f();
  std::vector<std::uint64_t> t;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count()));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

// Exactly round(sparsity * cols) zeros per row at random positions, the rest
// uniform in +-[0.5, 1.5): the zero fraction is what was asked for.
DenseMatrix operand_with_sparsity(std::size_t rows, std::size_t cols, double sparsity, Rng &rng) {
  DenseMatrix a(rows, cols);
  const auto zeros = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(cols)));
  std::vector<std::uint32_t> idx(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c)
      idx[c] = static_cast<std::uint32_t>(c);
    for (std::size_t c = cols; c > 1; --c)
      std::swap(idx[c - 1], idx[rng.below(c)]);
    for (std::size_t c = zeros; c < cols; ++c) {
      const double mag = rng.uniform(0.5, 1.5);
      a(r, idx[c]) = static_cast<float>(rng.bernoulli(0.5) ? mag : -mag);
    }
  }
  return a;
}

} // namespace

BenchReport bench(const BenchOptions &opt) {
  if (opt.m == 0 || opt.n == 0 || opt.k == 0)
    throw ConfigError("bench: shapes must be at least 1");
  if (opt.iters < 1 || opt.warmup < 0)
    throw ConfigError("bench: iters must be >= 1 and warmup >= 0");
  if (!(opt.sparsity >= 0.0 && opt.sparsity <= 1.0))
    throw ConfigError("bench: sparsity must be in [0, 1]");
  BenchReport r;
  r.op = opt.op;
  r.m = opt.m;
  r.n = opt.n;
  r.k = opt.k;
  r.sparsity = opt.sparsity;
  r.dense_mac_count = static_cast<std::uint64_t>(opt.m) * opt.n * opt.k;
  Rng rng(opt.seed);
  DenseMatrix out;
  auto count = [&](auto &&f) {
    mac_counter() = {};
    out = f();
    return mac_counter().total();
  };

  if (opt.op == "gemm") {
    const DenseMatrix a = operand_with_sparsity(opt.m, opt.k, opt.sparsity, rng);
    const DenseMatrix b = random_uniform<float>(opt.k, opt.n, rng);
    auto f = [&] { return gemm(a, b); };
    r.mac_count = count(f);
    if (opt.timing)
      r.wall_time_ns = median_ns(opt.warmup, opt.iters, f);
  } else if (opt.op == "spgemm") {
    if (opt.k % 4 != 0)
      throw ConfigError("bench spgemm: k must be divisible by 4");
    const DenseMatrix a = operand_with_sparsity(opt.m, opt.k, opt.sparsity, rng);
    const DenseMatrix b = random_uniform<float>(opt.k, opt.n, rng);
    const auto s = sparsify_token_wise(a).sparse;
    auto f = [&] { return sp_gemm(s, b); };
    r.mac_count = count(f);
    if (opt.timing)
      r.wall_time_ns = median_ns(opt.warmup, opt.iters, f);
  } else if (opt.op == "splitgemm") {
    if (opt.k % 4 != 0 || opt.m % 4 != 0)
      throw ConfigError("bench splitgemm: k (tokens) and m (features) must be divisible by 4");
    r.split_ratio = opt.ratio;
    const DenseMatrix a = operand_with_sparsity(opt.k, opt.m, opt.sparsity, rng);
    const DenseMatrix b = random_uniform<float>(opt.k, opt.n, rng);
    const Mask mask = sparsify_token_wise(a).mask;
    const SplitPlan plan = partition_features(column_nonzero_counts(a), opt.ratio);
    auto f = [&] { return split_gemm_t(a, mask, b, plan); };
    r.mac_count = count(f);
    if (opt.timing)
      r.wall_time_ns = median_ns(opt.warmup, opt.iters, f);
  } else if (opt.op == "ffn-fwd") {
    if (opt.m % 4 != 0 || opt.n % 4 != 0)
      throw ConfigError("bench ffn-fwd: m (tokens) and n (hidden) must be divisible by 4");
    FfnParams<float> p;
    p.w1 = random_normal<float>(opt.k, opt.n, rng, 1.0 / std::sqrt(static_cast<double>(opt.k)));
    p.w2 = random_normal<float>(opt.n, opt.k, rng, 1.0 / std::sqrt(static_cast<double>(opt.n)));
    const DenseMatrix x = random_normal<float>(opt.m, opt.k, rng);
    FfnConfig cfg;
    cfg.forward_mode = ForwardMode::sparse24;
    cfg.permute_tokens = true;
    auto sparse = [&] { return ffn_forward(x, p, cfg).first; };
    auto dense = [&] { return ffn_forward(x, p, FfnConfig::dense_baseline()).first; };
    r.dense_mac_count *= 2;
    r.mac_count = count(sparse);
    if (opt.timing) {
      r.wall_time_ns = median_ns(opt.warmup, opt.iters, sparse);
      r.dense_wall_time_ns = median_ns(opt.warmup, opt.iters, dense);
    }
  } else {
    throw ConfigError("unknown bench op '" + opt.op + "' (gemm | spgemm | splitgemm | ffn-fwd)");
  }
  if (r.wall_time_ns > 0)
    r.effective_gmacs_per_s = static_cast<double>(r.mac_count) / static_cast<double>(r.wall_time_ns);
  r.checksum = checksum(to_vector(out));
  return r;
}

std::string bench_json(const BenchReport &r, bool timing) {
  json j;
  j["op"] = r.op;
  j["m"] = r.m;
  j["n"] = r.n;
  j["k"] = r.k;
  j["sparsity"] = r.sparsity;
  j["split_ratio"] = r.split_ratio;
  j["mac_count"] = r.mac_count;
  j["dense_mac_count"] = r.dense_mac_count;
  j["mac_fraction"] = static_cast<double>(r.mac_count) / static_cast<double>(r.dense_mac_count);
  if (timing) {
    j["wall_time_ns"] = r.wall_time_ns;
    j["effective_gmacs_per_s"] = r.effective_gmacs_per_s;
    if (r.op == "ffn-fwd")
      j["dense_wall_time_ns"] = r.dense_wall_time_ns;
  }
  j["checksum"] = r.checksum;
  return j.dump(2) + "\n";
}

namespace {

void write_text(const fs::path &path, const std::string &s) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
}

struct TrainArgs {
  std::string config;
  std::string corpus;
  std::int64_t steps = -1;
  std::int64_t seed = -1;
  std::vector<std::string> sets;
  std::string out = "run";
};

train::TrainConfig resolve_config(const TrainArgs &a, std::ostream &err) {
  if (!fs::exists(a.config))
    throw DataError("config file not found: " + a.config);
  train::TrainConfig cfg = train::load_config(a.config);
  // Flags beat file values; --set is applied last of all.
  if (a.steps >= 0)
    cfg.steps = a.steps;
  if (a.seed >= 0)
    cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.corpus.empty())
    cfg.corpus = a.corpus;
  for (const auto &s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    train::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (cfg.warmup_dense_steps > cfg.steps) {
    err << "warning: warmup_dense_steps " << cfg.warmup_dense_steps << " exceeds steps; clamped to "
        << cfg.steps << "\n";
    cfg.warmup_dense_steps = cfg.steps;
  }
  cfg.validate();
  if (cfg.corpus.empty() || !fs::exists(cfg.corpus))
    throw DataError("corpus not found: '" + cfg.corpus + "'");
  return cfg;
}

int cmd_train(const TrainArgs &a, std::ostream &out, std::ostream &err) {
  const train::TrainConfig cfg = resolve_config(a, err);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  std::vector<train::MetricsRecord> seen;
  train::TrainHooks hooks;
  hooks.on_metrics = [&](const train::MetricsRecord &r) {
    seen.push_back(r);
    out << "step " << r.step << "  train " << r.train_loss << "  eval " << r.eval_loss << "\n";
  };
  train::TrainResult result;
  try {
    result = train::train(cfg, hooks);
  } catch (const DivergenceError &e) {
    result.metrics = seen;
    result.steps_completed = e.step() - 1;
    write_text(dir / "metrics.csv", train::format_metrics_csv(seen));
    write_text(dir / "summary.json", train::format_summary_json(cfg, result, e.step()));
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  }
  for (const auto &w : result.warnings)
    err << "warning: " << w << "\n";
  write_text(dir / "metrics.csv", train::format_metrics_csv(result.metrics));
  write_text(dir / "summary.json", train::format_summary_json(cfg, result));
  train::write_checkpoint(dir / "checkpoint", result.model, cfg, result.steps_completed);
  out << "wrote " << (dir / "metrics.csv").string() << ", " << (dir / "summary.json").string()
      << ", " << (dir / "checkpoint").string() << "\n";
  return kExitOk;
}

int cmd_ablate(const TrainArgs &a, const std::vector<std::string> &rows, std::ostream &out,
               std::ostream &err) {
  const train::TrainConfig cfg = resolve_config(a, err);
  const auto data = train::build_dataset(fs::path(cfg.corpus), cfg.model.context, cfg.split_fraction,
                                         cfg.model.vocab_size);
  for (const auto &w : data.warnings)
    err << "warning: " << w << "\n";
  const fs::path dir = a.out;
  fs::create_directories(dir);
  const auto outcome = train::ablate(cfg, data, rows, [&](const train::AblationOutcome &o) {
    char line[256];
    if (o.diverged)
      std::snprintf(line, sizeof line, "%-46s diverged at step %lld\n", o.label.c_str(),
                    static_cast<long long>(o.diverged_step));
    else
      std::snprintf(line, sizeof line, "%-46s eval loss %.4f  (%zu/%zu sparse GEMMs)\n",
                    o.label.c_str(), o.final_eval_loss, o.sparse_gemms, o.gemms);
    out << line << std::flush;
  });
  write_text(dir / "ablation.csv", train::format_ablation_csv(outcome));
  write_text(dir / "ablation.json", train::format_ablation_json(cfg, outcome));
  out << "wrote " << (dir / "ablation.csv").string() << ", " << (dir / "ablation.json").string() << "\n";
  return kExitOk;
}

json inspect_json(const fs::path &path) {
  const auto bytes = read_file_bytes(path);
  json j;
  DenseMatrix a;
  switch (sniff_kind(bytes)) {
  case FileKind::dense:
    a = decode_matrix(bytes);
    j["format"] = "S24M";
    break;
  case FileKind::sparse: {
    const auto s = decode_sparse(bytes);
    j["format"] = "S24C";
    j["orientation"] = to_string(s.orientation());
    a = decompress(s);
    break;
  }
  default:
    throw FormatError("unrecognized magic (expected S24M or S24C)", 0);
  }
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  const std::uint64_t nz = detail::count_nonzero<float>(a.data());
  j["nonzeros"] = nz;
  j["sparsity"] = a.size() ? 1.0 - static_cast<double>(nz) / static_cast<double>(a.size()) : 1.0;

  // Groups with at most two nonzeros, in each orientation the shape allows.
  auto compliance = [&](bool token) -> json {
    const std::size_t len = token ? a.cols() : a.rows();
    const std::size_t other = token ? a.rows() : a.cols();
    if (len % 4 != 0)
      return nullptr;
    std::uint64_t ok = 0, total = 0;
    for (std::size_t o = 0; o < other; ++o)
      for (std::size_t g = 0; g < len / 4; ++g) {
        int cnt = 0;
        for (std::size_t p = 0; p < 4; ++p)
          cnt += (token ? a(o, 4 * g + p) : a(4 * g + p, o)) != 0.0f;
        ok += cnt <= 2;
        ++total;
      }
    return total ? static_cast<double>(ok) / static_cast<double>(total) : 1.0;
  };
  j["compliance_token_wise"] = compliance(true);
  j["compliance_feature_wise"] = compliance(false);

  // Histogram of per-column nonzero counts over 10 equal bins of [0, rows].
  const auto counts = column_nonzero_counts(a);
  constexpr std::size_t bins = 10;
  std::vector<std::uint64_t> hist(bins, 0);
  std::vector<double> edges;
  for (std::size_t b = 0; b <= bins; ++b)
    edges.push_back(static_cast<double>(a.rows()) * static_cast<double>(b) / bins);
  for (auto c : counts) {
    std::size_t b = a.rows() ? c * bins / a.rows() : 0;
    hist[std::min(b, bins - 1)] += 1;
  }
  j["column_count_histogram"] = {{"bin_edges", edges}, {"columns", hist}};
  return j;
}

int cmd_inspect(const std::string &path, bool as_json, std::ostream &out) {
  const json j = inspect_json(path);
  if (as_json) {
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "format      " << j["format"].get<std::string>();
  if (j.contains("orientation"))
    out << " (" << j["orientation"].get<std::string>() << ")";
  out << "\nshape       " << j["rows"] << " x " << j["cols"] << "\n";
  out << "sparsity    " << j["sparsity"] << "\n";
  out << "2:4 token   " << (j["compliance_token_wise"].is_null() ? std::string("n/a") : j["compliance_token_wise"].dump()) << "\n";
  out << "2:4 feature " << (j["compliance_feature_wise"].is_null() ? std::string("n/a") : j["compliance_feature_wise"].dump()) << "\n";
  out << "column nonzero counts (histogram):\n";
  const auto &h = j["column_count_histogram"];
  for (std::size_t b = 0; b < h["columns"].size(); ++b) {
    char line[96];
    std::snprintf(line, sizeof line, "  [%8.1f, %8.1f%c %llu\n", h["bin_edges"][b].get<double>(),
                  h["bin_edges"][b + 1].get<double>(), b + 1 == h["columns"].size() ? ']' : ')',
                  static_cast<unsigned long long>(h["columns"][b].get<std::uint64_t>()));
    out << line;
  }
  return kExitOk;
}

int cmd_sparsify(const std::string &in, const std::string &outp, const std::string &orientation,
                 bool as_json, std::ostream &out) {
  const DenseMatrix a = read_matrix(in);
  SparsifyResult<float> r;
  if (orientation == "token")
    r = sparsify_token_wise(a);
  else if (orientation == "feature")
    r = sparsify_feature_wise(a);
  else
    throw ConfigError("orientation must be token or feature");
  write_sparse(outp, r.sparse);
  json j;
  j["orientation"] = to_string(r.sparse.orientation());
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  j["nonzeros_before"] = r.stats.nonzeros_before;
  j["nonzeros_after"] = r.stats.nonzeros_after;
  j["dropped"] = r.stats.dropped;
  j["dropped_fraction_of_nonzeros"] = r.stats.dropped_fraction_of_nonzeros;
  if (as_json)
    out << j.dump(2) << "\n";
  else
    out << "wrote " << outp << ": " << r.stats.dropped << " of " << r.stats.nonzeros_before
        << " nonzeros dropped (" << 100.0 * r.stats.dropped_fraction_of_nonzeros << "%)\n";
  return kExitOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"2:4 activation sparsity testbed"};
  app.name(args.empty() ? "s24" : args.front());
  app.require_subcommand(1);

  BenchOptions bo;
  bool bench_json_out = false, no_timing = false;
  auto *bench_cmd = app.add_subcommand("bench", "Time a GEMM kernel or the FFN forward and count MACs");
  bench_cmd->add_option("--op", bo.op, "gemm | spgemm | splitgemm | ffn-fwd")->capture_default_str();
  bench_cmd->add_option("--m", bo.m)->capture_default_str();
  bench_cmd->add_option("--n", bo.n)->capture_default_str();
  bench_cmd->add_option("--k", bo.k)->capture_default_str();
  bench_cmd->add_option("--sparsity", bo.sparsity, "zero fraction of operand A")->capture_default_str();
  bench_cmd->add_option("--ratio", bo.ratio, "sparse feature fraction (splitgemm)")->capture_default_str();
  bench_cmd->add_option("--iters", bo.iters)->capture_default_str();
  bench_cmd->add_option("--warmup", bo.warmup)->capture_default_str();
  bench_cmd->add_option("--seed", bo.seed)->capture_default_str();
  bench_cmd->add_flag("--json", bench_json_out);
  bench_cmd->add_flag("--no-timing", no_timing, "omit wall-clock fields (byte-identical reruns)");

  TrainArgs ta;
  auto add_train_opts = [&](CLI::App *c) {
    c->add_option("--config", ta.config, "key = value config file")->required();
    c->add_option("--steps", ta.steps, "override steps");
    c->add_option("--seed", ta.seed, "override seed");
    c->add_option("--corpus", ta.corpus, "override the corpus path");
    c->add_option("--set", ta.sets, "override any config key: --set key=value");
    c->add_option("--out", ta.out, "output directory")->capture_default_str();
  };
  auto *train_cmd = app.add_subcommand("train", "Train the toy model; writes metrics.csv, summary.json, checkpoint/");
  add_train_opts(train_cmd);

  std::vector<std::string> rows;
  auto *ablate_cmd = app.add_subcommand("ablate", "Run the ablation rows; writes ablation.csv, ablation.json");
  add_train_opts(ablate_cmd);
  ablate_cmd->add_option("--rows", rows, "comma-separated row ids")->delimiter(',');

  std::string inspect_path;
  bool inspect_json_out = false;
  auto *inspect_cmd = app.add_subcommand("inspect", "Print shape, sparsity and 2:4 compliance of a matrix file");
  inspect_cmd->add_option("file", inspect_path)->required();
  inspect_cmd->add_flag("--json", inspect_json_out);

  std::string sp_in, sp_out, sp_orient = "token";
  bool sp_json = false;
  auto *sparsify_cmd = app.add_subcommand("sparsify", "2:4-sparsify an S24M file into an S24C file");
  sparsify_cmd->add_option("input", sp_in)->required();
  sparsify_cmd->add_option("output", sp_out)->required();
  sparsify_cmd->add_option("--orientation", sp_orient, "token | feature")->capture_default_str();
  sparsify_cmd->add_flag("--json", sp_json);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError &e) {
    // Help and version requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*bench_cmd) {
      bo.timing = !no_timing;
      const BenchReport r = bench(bo);
      if (bench_json_out) {
        out << bench_json(r, bo.timing);
      } else {
        out << "op            " << r.op << "\n"
            << "shape         m=" << r.m << " n=" << r.n << " k=" << r.k << "\n"
            << "mac_count     " << r.mac_count << " (dense " << r.dense_mac_count << ")\n";
        if (bo.timing) {
          out << "median time   " << r.wall_time_ns << " ns\n"
              << "throughput    " << r.effective_gmacs_per_s << " GMAC/s\n";
          if (r.op == "ffn-fwd")
            out << "dense forward " << r.dense_wall_time_ns << " ns\n";
        }
        out << "checksum      " << r.checksum << "\n";
      }
      return kExitOk;
    }
    if (*train_cmd)
      return cmd_train(ta, out, err);
    if (*ablate_cmd)
      return cmd_ablate(ta, rows, out, err);
    if (*inspect_cmd)
      return cmd_inspect(inspect_path, inspect_json_out, out);
    if (*sparsify_cmd)
      return cmd_sparsify(sp_in, sp_out, sp_orient, sp_json, out);
  } catch (const DivergenceError &e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

int run(int argc, char **argv, std::ostream &out, std::ostream &err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

} // namespace s24::cli
