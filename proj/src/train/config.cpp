// SPDX-License-Identifier: Apache-2.0
#include <s24/matrix_io.hpp>
#include <s24/train/config.hpp>

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

namespace s24::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T> T parse_number(const std::string &key, const std::string &v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "off")
    return false;
  throw ConfigError("bad boolean '" + v + "' for " + key + " (true | false)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char s[32];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::strtod(s, nullptr) == v)
      return s;
  }
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(TrainConfig &, const std::string &, const std::string &)> set;
  std::function<std::string(const TrainConfig &)> get;
};

#define S24_INT(path, type)                                                                    \
  Field {                                                                                      \
    [](TrainConfig &c, const std::string &k, const std::string &v) {                           \
      c.path = parse_number<type>(k, v);                                                       \
    },                                                                                         \
        [](const TrainConfig &c) { return std::to_string(c.path); }                            \
  }
#define S24_REAL(path)                                                                         \
  Field {                                                                                      \
    [](TrainConfig &c, const std::string &k, const std::string &v) {                           \
      c.path = parse_number<double>(k, v);                                                     \
    },                                                                                         \
        [](const TrainConfig &c) { return fmt(c.path); }                                       \
  }
#define S24_BOOL(path)                                                                         \
  Field {                                                                                      \
    [](TrainConfig &c, const std::string &k, const std::string &v) {                           \
      c.path = parse_bool(k, v);                                                               \
    },                                                                                         \
        [](const TrainConfig &c) { return fmt(c.path); }                                       \
  }

const std::vector<std::pair<std::string, Field>> &fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"vocab_size", S24_INT(model.vocab_size, std::size_t)},
      {"context", S24_INT(model.context, std::size_t)},
      {"embed_dim", S24_INT(model.embed_dim, std::size_t)},
      {"hidden_dim", S24_INT(model.hidden_dim, std::size_t)},
      {"num_blocks", S24_INT(model.num_blocks, std::size_t)},
      {"activation",
       {[](TrainConfig &c, const std::string &, const std::string &v) {
          c.ffn.activation = parse_activation(v);
        },
        [](const TrainConfig &c) { return std::string(to_string(c.ffn.activation)); }}},
      {"forward_mode",
       {[](TrainConfig &c, const std::string &, const std::string &v) {
          c.ffn.forward_mode = parse_forward_mode(v);
        },
        [](const TrainConfig &c) { return std::string(to_string(c.ffn.forward_mode)); }}},
      {"backward_mode",
       {[](TrainConfig &c, const std::string &, const std::string &v) {
          c.ffn.backward_mode = parse_backward_mode(v);
        },
        [](const TrainConfig &c) { return std::string(to_string(c.ffn.backward_mode)); }}},
      {"mask_grad_with_fwd", S24_BOOL(ffn.mask_grad_with_fwd)},
      {"permute_tokens", S24_BOOL(ffn.permute_tokens)},
      {"permute_seed", S24_INT(ffn.permute_seed, std::uint64_t)},
      {"split_ratio", S24_REAL(ffn.split_ratio)},
      {"split_dw1", S24_BOOL(ffn.split_dw1)},
      {"fp8_emulation", S24_BOOL(ffn.fp8_emulation)},
      {"fp8_backward", S24_BOOL(ffn.fp8_backward)},
      {"lr", S24_REAL(optim.lr)},
      {"beta1", S24_REAL(optim.beta1)},
      {"beta2", S24_REAL(optim.beta2)},
      {"adam_eps", S24_REAL(optim.eps)},
      {"weight_decay", S24_REAL(optim.weight_decay)},
      {"grad_clip", S24_REAL(optim.grad_clip)},
      {"steps", S24_INT(steps, std::int64_t)},
      {"warmup_dense_steps", S24_INT(warmup_dense_steps, std::int64_t)},
      {"lr_warmup_steps", S24_INT(lr_warmup_steps, std::int64_t)},
      {"min_lr_ratio", S24_REAL(min_lr_ratio)},
      {"batch_tokens", S24_INT(batch_tokens, std::size_t)},
      {"eval_every", S24_INT(eval_every, std::int64_t)},
      {"eval_tokens", S24_INT(eval_tokens, std::size_t)},
      {"split_fraction", S24_REAL(split_fraction)},
      {"split_refresh_every", S24_INT(split_refresh_every, std::int64_t)},
      {"seed", S24_INT(seed, std::uint64_t)},
      {"corpus",
       {[](TrainConfig &c, const std::string &, const std::string &v) { c.corpus = v; },
        [](const TrainConfig &c) { return c.corpus; }}},
      {"inject_nan_step", S24_INT(inject_nan_step, std::int64_t)},
  };
  return table;
}

#undef S24_INT
#undef S24_REAL
#undef S24_BOOL

} // namespace

void TrainConfig::validate() const {
  model.validate();
  ffn.validate();
  if (steps < 0)
    throw ConfigError("steps must be >= 0");
  if (warmup_dense_steps < 0 || warmup_dense_steps > steps)
    throw ConfigError("warmup_dense_steps must be in [0, steps]");
  if (lr_warmup_steps < 0)
    throw ConfigError("lr_warmup_steps must be >= 0");
  if (batch_tokens == 0 || batch_tokens % 4 != 0)
    throw ConfigError("batch_tokens must be a positive multiple of 4");
  if (eval_every <= 0)
    throw ConfigError("eval_every must be positive");
  if (split_refresh_every <= 0)
    throw ConfigError("split_refresh_every must be positive");
  if (!(optim.lr > 0.0))
    throw ConfigError("lr must be positive");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must be in [0, 1)");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0))
    throw ConfigError("min_lr_ratio must be in [0, 1]");
  if (ffn.activation == Activation::swiglu && model.hidden_dim % 4 != 0)
    throw ConfigError("hidden_dim must be a multiple of 4");
}

void apply_setting(TrainConfig &cfg, const std::string &key, const std::string &value) {
  for (const auto &[name, field] : fields())
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig &cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto &[name, field] : fields())
    out.emplace_back(name, field.get(cfg));
  return out;
}

TrainConfig parse_config(std::string_view text, const TrainConfig &base) {
  TrainConfig cfg = base;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty())
      continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(cfg, trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError &e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

std::string format_config(const TrainConfig &cfg) {
  std::string out;
  for (const auto &[k, v] : config_entries(cfg))
    out += k + " = " + v + "\n";
  return out;
}

TrainConfig load_config(const std::filesystem::path &path, const TrainConfig &base) {
  const auto bytes = read_file_bytes(path);
  TrainConfig cfg = parse_config(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()), base);
  if (!cfg.corpus.empty() && std::filesystem::path(cfg.corpus).is_relative() &&
      cfg.corpus != base.corpus)
    cfg.corpus = (path.parent_path() / cfg.corpus).lexically_normal().string();
  return cfg;
}

} // namespace s24::train
