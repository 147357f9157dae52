// SPDX-License-Identifier: Apache-2.0
#include <s24/matrix_io.hpp>
#include <s24/rng.hpp>
#include <s24/train/trainer.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace s24::train {

using json = nlohmann::ordered_json;

namespace {

// Separate streams for initialization and batch sampling, so changing the
// model size does not reshuffle the data order.
constexpr std::uint64_t kBatchStream = 0x9E3779B97F4A7C15ull;

TokenSet sample_batch(const TokenSet &set, std::size_t n, Rng &rng) {
  TokenSet b;
  b.context = set.context;
  b.inputs.reserve(n * set.context);
  b.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.below(set.size());
    const auto w = set.window(k);
    b.inputs.insert(b.inputs.end(), w.begin(), w.end());
    b.targets.push_back(set.targets[k]);
  }
  return b;
}

bool all_finite(const ToyModel &g) {
  bool ok = true;
  g.for_each([&](const std::string &, const DenseMatrix &t, bool) {
    for (float v : t.data())
      ok = ok && std::isfinite(v);
  });
  return ok;
}

std::string fmt_real(double v) {
  if (std::isnan(v))
    return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace

TokenSet head_of(const TokenSet &set, std::size_t limit) {
  std::size_t n = limit == 0 ? set.size() : std::min(limit, set.size());
  n -= n % 4;
  TokenSet out;
  out.context = set.context;
  out.inputs.assign(set.inputs.begin(), set.inputs.begin() + static_cast<std::ptrdiff_t>(n * set.context));
  out.targets.assign(set.targets.begin(), set.targets.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

FfnConfig ffn_config_at(const TrainConfig &cfg, std::int64_t step) {
  FfnConfig f = cfg.ffn;
  if (step <= cfg.warmup_dense_steps) {
    f.forward_mode = ForwardMode::dense;
    f.backward_mode = BackwardMode::dense;
  }
  return f;
}

EvalResult evaluate(const ToyModel &m, const TokenSet &batch, const FfnConfig &ffn) {
  EvalResult r;
  if (batch.size() == 0)
    return r;
  const auto fwd = forward_model(m, batch, ffn);
  r.loss = cross_entropy(fwd.logits, batch.targets).loss;
  for (const auto &b : fwd.cache.blocks) {
    r.per_layer_sparsity.push_back(b.ffn.stats.sparsity_before);
    r.per_layer_dropped_fraction.push_back(b.ffn.stats.dropped_fraction_of_nonzeros);
  }
  return r;
}

TrainResult train(const TrainConfig &cfg, const DatasetSplit &data, const TrainHooks &hooks) {
  cfg.validate();
  if (data.train.size() == 0 && cfg.steps > 0)
    throw DataError("training set is empty");
  if (data.train.context != cfg.model.context)
    throw ConfigError("dataset context does not match the model context");

  TrainResult res;
  res.warnings = data.warnings;
  res.model = init_model(cfg.model, cfg.ffn.activation, cfg.seed);
  AdamWState opt = init_adamw(res.model);
  Rng batch_rng(cfg.seed ^ kBatchStream);
  const TokenSet eval_batch = head_of(data.eval, cfg.eval_tokens);
  if (eval_batch.size() == 0)
    res.warnings.push_back("no evaluation batch; eval_loss is reported as nan");
  res.initial_eval_loss = evaluate(res.model, eval_batch, ffn_config_at(cfg, 1)).loss;

  std::vector<std::optional<SplitPlan>> plans(cfg.model.num_blocks);
  std::int64_t sparse_steps = 0;

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    const FfnConfig ffn = ffn_config_at(cfg, step);
    const TokenSet batch = sample_batch(data.train, cfg.batch_tokens, batch_rng);

    ModelForwardOptions fo;
    std::vector<GemmCensus> census;
    fo.census = &census;
    if (ffn.backward_mode == BackwardMode::split_masked) {
      if (sparse_steps % cfg.split_refresh_every != 0)
        for (const auto &p : plans)
          fo.reuse_plans.push_back(p ? &*p : nullptr);
      ++sparse_steps;
    }

    const std::uint64_t macs_before = mac_counter().total();
    const auto fwd = forward_model(res.model, batch, ffn, fo);
    const LossResult loss = cross_entropy(fwd.logits, batch.targets);
    if (!std::isfinite(loss.loss))
      throw DivergenceError(step, "non-finite training loss");
    std::vector<BackwardStats> bstats;
    ToyModel grads = backward_model(loss.dlogits, fwd.cache, res.model, ffn, &census, &bstats);
    const std::uint64_t step_macs = mac_counter().total() - macs_before;

    if (step == cfg.inject_nan_step)
      grads.blocks.front().w1.data()[0] = std::numeric_limits<float>::quiet_NaN();
    if (!all_finite(grads))
      throw DivergenceError(step, "non-finite gradient");

    for (std::size_t l = 0; l < fwd.cache.blocks.size(); ++l)
      if (fwd.cache.blocks[l].ffn.plan)
        plans[l] = fwd.cache.blocks[l].ffn.plan;

    res.last_step_gemms = census.front().count();
    res.last_step_sparse_gemms = census.front().sparse_count();
    std::uint64_t ffn_macs = 0, ffn_dense = 0;
    for (const auto &c : census) {
      ffn_macs += c.macs();
      ffn_dense += c.dense_equivalent_macs;
    }
    res.last_step_ffn_mac_fraction = ffn_dense ? static_cast<double>(ffn_macs) / static_cast<double>(ffn_dense) : 1.0;
    for (const auto &b : bstats)
      res.g1_outside_mask += b.g1_outside_mask;
    res.backward_calls += bstats.size();
    if (hooks.on_step)
      hooks.on_step({step, loss.loss, &census, &bstats});

    adamw_step(res.model, grads, opt, cfg.optim,
               lr_at(step - 1, cfg.steps, cfg.lr_warmup_steps, cfg.optim.lr, cfg.min_lr_ratio));
    res.steps_completed = step;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const EvalResult ev = evaluate(res.model, eval_batch, ffn);
      MetricsRecord rec;
      rec.step = step;
      rec.train_loss = loss.loss;
      rec.eval_loss = ev.loss;
      rec.per_layer_sparsity = ev.per_layer_sparsity;
      rec.per_layer_dropped_fraction = ev.per_layer_dropped_fraction;
      if (eval_batch.size() == 0) {
        rec.per_layer_sparsity.assign(cfg.model.num_blocks, 0.0);
        rec.per_layer_dropped_fraction.assign(cfg.model.num_blocks, 0.0);
      }
      rec.macs_this_step = step_macs;
      res.metrics.push_back(rec);
      if (hooks.on_metrics)
        hooks.on_metrics(rec);
    }
  }
  return res;
}

TrainResult train(const TrainConfig &cfg, const TrainHooks &hooks) {
  if (cfg.corpus.empty())
    throw ConfigError("no corpus configured");
  const DatasetSplit data = build_dataset(std::filesystem::path(cfg.corpus), cfg.model.context,
                                          cfg.split_fraction, cfg.model.vocab_size);
  return train(cfg, data, hooks);
}

// ---------------------------------------------------------------------------

std::string format_metrics_csv(const std::vector<MetricsRecord> &metrics) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto &r : metrics)
    for (std::size_t l = 0; l < r.per_layer_sparsity.size(); ++l)
      out += std::to_string(r.step) + "," + fmt_real(r.train_loss) + "," + fmt_real(r.eval_loss) +
             "," + std::to_string(l) + "," + fmt_real(r.per_layer_sparsity[l]) + "," +
             fmt_real(r.per_layer_dropped_fraction[l]) + "," + std::to_string(r.macs_this_step) +
             "\n";
  return out;
}

void write_metrics_csv(const std::filesystem::path &path, const std::vector<MetricsRecord> &metrics) {
  const std::string s = format_metrics_csv(metrics);
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
}

static json config_json(const TrainConfig &cfg) {
  json c = json::object();
  for (const auto &[k, v] : config_entries(cfg))
    c[k] = v;
  return c;
}

std::string format_summary_json(const TrainConfig &cfg, const TrainResult &result,
                                std::int64_t diverged_step) {
  json j;
  j["seed"] = cfg.seed;
  j["steps_requested"] = cfg.steps;
  j["steps_completed"] = result.steps_completed;
  j["diverged"] = diverged_step >= 0;
  j["diverged_step"] = diverged_step >= 0 ? json(diverged_step) : json(nullptr);
  j["parameter_count"] = result.model.parameter_count();
  j["initial_eval_loss"] = nan_to_null(result.initial_eval_loss);
  if (!result.metrics.empty()) {
    const auto &last = result.metrics.back();
    j["final_train_loss"] = nan_to_null(last.train_loss);
    j["final_eval_loss"] = nan_to_null(last.eval_loss);
    j["final_sparsity"] = last.per_layer_sparsity;
    j["final_dropped_fraction"] = last.per_layer_dropped_fraction;
  } else {
    j["final_train_loss"] = nullptr;
    j["final_eval_loss"] = nullptr;
  }
  j["ffn_gemms_per_block"] = result.last_step_gemms;
  j["ffn_sparse_gemms_per_block"] = result.last_step_sparse_gemms;
  j["ffn_mac_fraction"] = result.last_step_ffn_mac_fraction;
  j["g1_outside_mask"] = result.g1_outside_mask;
  j["warnings"] = result.warnings;
  j["config"] = config_json(cfg);
  return j.dump(2) + "\n";
}

void write_checkpoint(const std::filesystem::path &dir, const ToyModel &m, const TrainConfig &cfg,
                      std::int64_t step) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  m.for_each([&](const std::string &name, const DenseMatrix &t, bool) {
    write_matrix(dir / (name + ".s24m"), t);
    tensors.push_back({{"name", name}, {"file", name + ".s24m"}, {"rows", t.rows()}, {"cols", t.cols()}});
  });
  json j;
  j["format"] = "s24-checkpoint";
  j["version"] = 1;
  j["step"] = step;
  j["activation"] = to_string(cfg.ffn.activation);
  j["model"] = {{"vocab_size", m.config.vocab_size}, {"context", m.config.context},
                {"embed_dim", m.config.embed_dim}, {"hidden_dim", m.config.hidden_dim},
                {"num_blocks", m.config.num_blocks}};
  j["tensors"] = tensors;
  j["config"] = config_json(cfg);
  const std::string s = j.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json", {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
}

ToyModel read_checkpoint(const std::filesystem::path &dir) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception &e) {
    throw DataError("bad checkpoint manifest: " + std::string(e.what()));
  }
  ModelConfig mc;
  mc.vocab_size = j.at("model").at("vocab_size");
  mc.context = j.at("model").at("context");
  mc.embed_dim = j.at("model").at("embed_dim");
  mc.hidden_dim = j.at("model").at("hidden_dim");
  mc.num_blocks = j.at("model").at("num_blocks");
  ToyModel m = zeros_like(init_model(mc, parse_activation(j.at("activation")), 0));
  m.for_each([&](const std::string &name, DenseMatrix &t, bool) {
    DenseMatrix loaded = read_matrix(dir / (name + ".s24m"));
    if (loaded.rows() != t.rows() || loaded.cols() != t.cols())
      throw DataError("checkpoint tensor " + name + " has the wrong shape");
    t = std::move(loaded);
  });
  return m;
}

// ---------------------------------------------------------------------------

std::size_t swiglu_hidden_dim(std::size_t h) {
  const std::size_t w = 2 * h / 3;
  return w - w % 4;
}

std::vector<AblationRow> ablation_rows(const TrainConfig &base) {
  TrainConfig recipe = base;
  recipe.ffn.activation = Activation::squared_relu;
  recipe.ffn.forward_mode = ForwardMode::sparse24;
  recipe.ffn.backward_mode = BackwardMode::split_masked;
  recipe.ffn.mask_grad_with_fwd = true;
  recipe.ffn.permute_tokens = true;

  TrainConfig relu2 = recipe;
  relu2.ffn.forward_mode = ForwardMode::dense;
  relu2.ffn.backward_mode = BackwardMode::dense;
  relu2.ffn.permute_tokens = false;

  TrainConfig swiglu = relu2;
  swiglu.ffn.activation = Activation::swiglu;
  swiglu.model.hidden_dim = swiglu_hidden_dim(base.model.hidden_dim);

  TrainConfig no_warmup = recipe;
  no_warmup.warmup_dense_steps = 0;
  TrainConfig naive = recipe;
  naive.ffn.backward_mode = BackwardMode::naive_sparse;
  TrainConfig no_permute = recipe;
  no_permute.ffn.permute_tokens = false;
  TrainConfig no_mask = recipe;
  no_mask.ffn.mask_grad_with_fwd = false;

  return {
      {"dense-swiglu", "Dense training (SwiGLU)", swiglu},
      {"dense-relu2", "Dense training (Squared-ReLU)", relu2},
      {"recipe", "2:4 recipe (5% of the features dense in BW)", recipe},
      {"no-warmup", "2:4 - no warmup", no_warmup},
      {"naive-bw", "2:4 - naively sparsify backward GEMMs", naive},
      {"no-permute", "2:4 - no permuting rows", no_permute},
      {"no-mask-bw", "2:4 - no sparsify y_1 in BW pass", no_mask},
  };
}

std::vector<AblationOutcome> ablate(const TrainConfig &base, const DatasetSplit &data,
                                    const std::vector<std::string> &ids,
                                    const std::function<void(const AblationOutcome &)> &on_row) {
  const auto rows = ablation_rows(base);
  for (const auto &id : ids) {
    bool known = false;
    for (const auto &r : rows)
      known = known || r.id == id;
    if (!known)
      throw ConfigError("unknown ablation row '" + id + "'");
  }
  std::vector<AblationOutcome> out;
  for (const auto &row : rows) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), row.id) == ids.end())
      continue;
    AblationOutcome o;
    o.id = row.id;
    o.label = row.label;
    try {
      const TrainResult r = train(row.config, data);
      if (!r.metrics.empty()) {
        o.final_eval_loss = r.metrics.back().eval_loss;
        o.final_train_loss = r.metrics.back().train_loss;
      }
      o.sparse_gemms = r.last_step_sparse_gemms;
      o.gemms = r.last_step_gemms;
      o.ffn_mac_fraction = r.last_step_ffn_mac_fraction;
      o.parameter_count = r.model.parameter_count();
    } catch (const DivergenceError &e) {
      o.diverged = true;
      o.diverged_step = e.step();
      o.parameter_count = init_model(row.config.model, row.config.ffn.activation, 0).parameter_count();
    }
    out.push_back(o);
    if (on_row)
      on_row(o);
  }
  return out;
}

std::string format_ablation_csv(const std::vector<AblationOutcome> &rows) {
  std::string out = "id,label,status,diverged_step,final_train_loss,final_eval_loss,sparse_gemms,gemms,ffn_mac_fraction,parameters\n";
  for (const auto &r : rows)
    out += r.id + ",\"" + r.label + "\"," + (r.diverged ? "diverged" : "ok") + "," +
           (r.diverged ? std::to_string(r.diverged_step) : "") + "," + fmt_real(r.final_train_loss) +
           "," + fmt_real(r.final_eval_loss) + "," + std::to_string(r.sparse_gemms) + "," +
           std::to_string(r.gemms) + "," + fmt_real(r.ffn_mac_fraction) + "," +
           std::to_string(r.parameter_count) + "\n";
  return out;
}

std::string format_ablation_json(const TrainConfig &base, const std::vector<AblationOutcome> &rows) {
  json j;
  j["seed"] = base.seed;
  j["steps"] = base.steps;
  json arr = json::array();
  for (const auto &r : rows)
    arr.push_back({{"id", r.id},
                   {"label", r.label},
                   {"status", r.diverged ? "diverged" : "ok"},
                   {"diverged_step", r.diverged ? json(r.diverged_step) : json(nullptr)},
                   {"final_train_loss", nan_to_null(r.final_train_loss)},
                   {"final_eval_loss", nan_to_null(r.final_eval_loss)},
                   {"sparse_gemms", r.sparse_gemms},
                   {"gemms", r.gemms},
                   {"ffn_mac_fraction", r.ffn_mac_fraction},
                   {"parameters", r.parameter_count}});
  j["rows"] = arr;
  j["config"] = config_json(base);
  return j.dump(2) + "\n";
}

} // namespace s24::train
