// Command-line front end for the session recommender. Five subcommands tie
// the pipeline together: `preprocess` turns raw click logs into prepared
// example files, `train` fits a model and writes a checkpoint, `evaluate`
// scores a checkpoint on held-out examples, `ablate` sweeps the session
// representation variants under one budget, and `predict` answers an ad-hoc
// ranking query for a single session.
//
// Settings flow from three layers with increasing priority: built-in
// defaults, a `key=value` config file (`--config`), and command-line flags.
// Exit codes: 0 success, 2 input/config error, 3 checkpoint or vocabulary
// integrity error, 4 unknown item in an inference request, 1 anything else.

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "tagnn/checkpoint.hpp"
#include "tagnn/data.hpp"
#include "tagnn/error.hpp"
#include "tagnn/graph.hpp"
#include "tagnn/metrics.hpp"
#include "tagnn/model.hpp"
#include "tagnn/tape.hpp"
#include "tagnn/tensor.hpp"
#include "tagnn/trainer.hpp"

namespace {

using tagnn::Error;
using tagnn::ErrorKind;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::data:
    case ErrorKind::config:
      return 2;
    case ErrorKind::checkpoint:
      return 3;
    case ErrorKind::unknown_item:
      return 4;
    default:
      return 1;
  }
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::string in_dir(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) tagnn::raise(ErrorKind::data, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) tagnn::raise(ErrorKind::data, "write failed for '" + path + "'");
}

void require_setting(const std::string& value, const char* key) {
  if (value.empty()) tagnn::raise(ErrorKind::config, std::string("missing required setting: ") + key);
}

// ---------------------------------------------------------------------------
// Config file support
//
// The file is plain UTF-8 `key=value` lines; `#` starts a comment and blank
// lines are skipped. Keys are the long flag names without the leading
// dashes. A key whose flag also appeared on the command line is ignored —
// flags win.

template <typename T>
T parse_setting(const std::string& key, const std::string& text);

template <>
std::string parse_setting<std::string>(const std::string&, const std::string& text) {
  return text;
}

template <>
int parse_setting<int>(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  tagnn::raise(ErrorKind::config, "setting '" + key + "' needs an integer, got '" + text + "'");
}

template <>
uint64_t parse_setting<uint64_t>(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  tagnn::raise(ErrorKind::config,
               "setting '" + key + "' needs a non-negative integer, got '" + text + "'");
}

template <>
double parse_setting<double>(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  tagnn::raise(ErrorKind::config, "setting '" + key + "' needs a number, got '" + text + "'");
}

template <>
bool parse_setting<bool>(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  tagnn::raise(ErrorKind::config,
               "setting '" + key + "' needs true/false/1/0, got '" + text + "'");
}

/// Per-subcommand registry mapping config-file keys to the matching flag and
/// a setter for its bound variable, so a file can fill in anything the
/// command line left at its default.
class ConfigBook {
 public:
  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T& target) {
    entries_[key] = Entry{opt, [key, &target](const std::string& text) {
                            target = parse_setting<T>(key, text);
                          }};
  }

  /// Applies `key=value` lines from `path` to every setting whose flag was
  /// absent from the command line. Unknown keys are config errors.
  void apply_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) tagnn::raise(ErrorKind::data, "cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string text = trimmed(line);
      if (text.empty()) continue;
      const size_t eq = text.find('=');
      if (eq == std::string::npos)
        tagnn::raise(ErrorKind::config, fmt("config file line %d is not key=value: '%s'", lineno,
                                            text.c_str()));
      const std::string key = trimmed(text.substr(0, eq));
      const std::string value = trimmed(text.substr(eq + 1));
      auto it = entries_.find(key);
      if (it == entries_.end())
        tagnn::raise(ErrorKind::config, "unknown config key '" + key + "'");
      if (it->second.opt->count() == 0) it->second.set(value);
    }
  }

 private:
  struct Entry {
    CLI::Option* opt = nullptr;
    std::function<void(const std::string&)> set;
  };
  std::map<std::string, Entry> entries_;
};

/// Settings every subcommand shares. `finish()` runs first in each command
/// callback: it layers the config file under the parsed flags and pins the
/// worker count.
struct Common {
  std::string config;
  int threads = 1;
  ConfigBook book;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--config", config, "key=value settings file (flags win)");
    CLI::Option* t = cmd.add_option("--threads", threads, "worker threads (default 1)");
    book.bind(t, "threads", threads);
  }

  void finish() const {
    if (!config.empty()) book.apply_file(config);
    if (threads < 1) tagnn::raise(ErrorKind::config, "threads must be at least 1");
    tagnn::set_thread_count(threads);
  }
};

// ---------------------------------------------------------------------------
// Shared plumbing

/// Reads a prepared examples file and rejects labels outside [0, m).
std::vector<tagnn::TrainExample> load_examples_checked(const std::string& path, int item_count,
                                                       const char* what) {
  std::vector<tagnn::TrainExample> examples = tagnn::read_examples(path);
  for (size_t i = 0; i < examples.size(); ++i) {
    const tagnn::TrainExample& ex = examples[i];
    if (ex.label < 0 || ex.label >= item_count)
      tagnn::raise(ErrorKind::data, fmt("%s example %zu labels item %d outside the vocabulary "
                                        "(%d items)",
                                        what, i, ex.label, item_count));
    for (int item : ex.prefix)
      if (item < 0 || item >= item_count)
        tagnn::raise(ErrorKind::data, fmt("%s example %zu references item %d outside the "
                                          "vocabulary (%d items)",
                                          what, i, item, item_count));
  }
  return examples;
}

/// Vocabulary file next to prepared data, or the explicit path when given.
std::string resolve_vocab_path(const std::string& explicit_path, const std::string& data) {
  if (!explicit_path.empty()) {
    if (std::filesystem::is_directory(explicit_path)) return in_dir(explicit_path, "vocab.txt");
    return explicit_path;
  }
  if (!data.empty() && std::filesystem::is_directory(data)) return in_dir(data, "vocab.txt");
  return "";
}

/// The checkpoint records the hash of the vocabulary it was trained with;
/// scoring against any other item set is meaningless.
void require_matching_vocab(const tagnn::Checkpoint& c, const tagnn::Vocabulary& vocab) {
  const std::string want = c.need("vocab_hash");
  const std::string got = std::to_string(tagnn::vocab_hash(vocab));
  if (want != got)
    tagnn::raise(ErrorKind::checkpoint,
                 "vocabulary mismatch: checkpoint was trained on a different item set "
                 "(stored hash " +
                     want + ", this vocabulary " + got + ")");
}

std::string select_name(bool by_mrr) { return by_mrr ? "mrr" : "hit"; }

bool parse_select(const std::string& s) {
  if (s == "mrr") return true;
  if (s == "hit") return false;
  tagnn::raise(ErrorKind::config, "unknown selection metric '" + s + "' (expected mrr or hit)");
}

/// Checkpoint metadata shared by `train` and `ablate`: everything needed to
/// evaluate or resume against the same data, all rendered deterministically.
std::map<std::string, std::string> checkpoint_metadata(const tagnn::TrainConfig& cfg,
                                                       const tagnn::Vocabulary& vocab,
                                                       const tagnn::FitResult& fit) {
  std::map<std::string, std::string> extra;
  extra["vocab_hash"] = std::to_string(tagnn::vocab_hash(vocab));
  extra["ggnn_steps"] = std::to_string(cfg.ggnn_steps);
  extra["k"] = std::to_string(cfg.k);
  extra["batch_size"] = std::to_string(cfg.batch_size);
  extra["max_epochs"] = std::to_string(cfg.max_epochs);
  extra["patience"] = std::to_string(cfg.patience);
  extra["decay_every"] = std::to_string(cfg.decay_every);
  extra["seed"] = std::to_string(cfg.seed);
  extra["lr0"] = fmt("%.17g", cfg.lr0);
  extra["decay_factor"] = fmt("%.17g", cfg.decay_factor);
  extra["l2"] = fmt("%.17g", cfg.l2);
  extra["loss"] = tagnn::loss_mode_name(cfg.loss_mode);
  extra["select"] = select_name(cfg.select_by_mrr);
  extra["best_epoch"] = std::to_string(fit.best_epoch);
  extra["best_metric"] = fmt("%.17g", fit.best_metric);
  extra["epochs_run"] = std::to_string(fit.epochs_run);
  return extra;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOpts {
  Common common;
  std::string data;
  std::string format = "yoochoose";
  std::string out;
  double test_window_days = 1.0;
  double fraction = 1.0;
};

void add_preprocess(CLI::App& app, PreprocessOpts& o) {
  CLI::App& cmd = *app.add_subcommand(
      "preprocess", "parse a raw click log into train/test examples and a vocabulary");
  o.common.add_to(cmd);
  ConfigBook& book = o.common.book;
  book.bind(cmd.add_option("--data", o.data, "raw click log file"), "data", o.data);
  book.bind(cmd.add_option("--format", o.format, "log format: yoochoose or diginetica"), "format",
            o.format);
  book.bind(cmd.add_option("--out", o.out, "output directory"), "out", o.out);
  book.bind(cmd.add_option("--test-window-days", o.test_window_days,
                           "held-out window before the newest session end (default 1)"),
            "test-window-days", o.test_window_days);
  book.bind(cmd.add_option("--fraction", o.fraction,
                           "most recent fraction of training sessions to keep (default 1)"),
            "fraction", o.fraction);
  cmd.callback([&o] {
    o.common.finish();
    require_setting(o.data, "data");
    require_setting(o.out, "out");
    if (!(o.fraction > 0.0) || o.fraction > 1.0)
      tagnn::raise(ErrorKind::config, "fraction must be in (0, 1]");
    if (!(o.test_window_days > 0.0))
      tagnn::raise(ErrorKind::config, "test-window-days must be positive");
    const tagnn::LogFormat format = tagnn::parse_log_format(o.format);

    std::ifstream in(o.data, std::ios::binary);
    if (!in) tagnn::raise(ErrorKind::data, "cannot open input log '" + o.data + "'");
    const tagnn::ParseResult parsed = tagnn::parse_events(in, format);
    if (parsed.total_rows == 0)
      tagnn::raise(ErrorKind::data, "input log '" + o.data + "' holds no data rows");
    if (parsed.skip_warning())
      tagnn::raise(ErrorKind::data,
                   fmt("%zu of %zu rows unparseable, over the 1%% threshold", parsed.skipped_rows,
                       parsed.total_rows));
    if (parsed.skipped_rows > 0)
      std::cerr << fmt("note: skipped %zu of %zu malformed rows\n", parsed.skipped_rows,
                       parsed.total_rows);

    const tagnn::Corpus corpus = tagnn::build_and_filter(parsed.events);
    if (corpus.sessions.empty())
      tagnn::raise(ErrorKind::data, "no sessions survive frequency and length filtering");

    const int64_t window_ms = std::llround(o.test_window_days * 86400000.0);
    const tagnn::SplitResult split = tagnn::split_by_time(corpus.sessions, window_ms);
    if (split.train.empty()) tagnn::raise(ErrorKind::data, "time split leaves no training sessions");
    if (split.test.empty()) tagnn::raise(ErrorKind::data, "time split leaves no test sessions");

    const std::vector<tagnn::Session> train = tagnn::take_recent_fraction(split.train, o.fraction);
    const auto train_examples = tagnn::expand_all(train);
    const auto test_examples = tagnn::expand_all(split.test);
    if (train_examples.empty())
      tagnn::raise(ErrorKind::data, "no training examples after prefix expansion");

    std::filesystem::create_directories(o.out);
    tagnn::write_examples(in_dir(o.out, "train.txt"), train_examples);
    tagnn::write_examples(in_dir(o.out, "test.txt"), test_examples);
    tagnn::write_vocab(in_dir(o.out, "vocab.txt"), corpus.vocab);

    std::string stats;
    stats += "format=" + o.format + "\n";
    stats += fmt("raw_rows=%zu\n", parsed.total_rows);
    stats += fmt("skipped_rows=%zu\n", parsed.skipped_rows);
    stats += fmt("sessions=%zu\n", corpus.sessions.size());
    stats += fmt("items=%d\n", corpus.vocab.size());
    stats += fmt("train_sessions=%zu\n", train.size());
    stats += fmt("test_sessions=%zu\n", split.test.size());
    stats += fmt("train_examples=%zu\n", train_examples.size());
    stats += fmt("test_examples=%zu\n", test_examples.size());
    stats += fmt("boundary_ms=%lld\n", static_cast<long long>(split.boundary_ms));
    write_text(in_dir(o.out, "stats.txt"), stats);
    std::cout << stats;
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  Common common;
  std::string data;
  std::string out;
  std::string variant = "full";
  std::string loss = "categorical";
  std::string select = "mrr";
  tagnn::TrainConfig cfg;
  bool dry_run = false;
};

/// Registers the optimizer/model knobs shared by `train` and `ablate`.
void add_train_knobs(CLI::App& cmd, ConfigBook& book, TrainOpts& o, bool with_variant) {
  book.bind(cmd.add_option("--data", o.data, "prepared data directory"), "data", o.data);
  if (with_variant)
    book.bind(cmd.add_option("--variant", o.variant,
                             "session representation: full, L, Avg, Att or L_plus_Att"),
              "variant", o.variant);
  book.bind(cmd.add_option("--loss", o.loss, "objective: categorical or eq13"), "loss", o.loss);
  book.bind(cmd.add_option("--select", o.select, "model selection metric: mrr or hit"), "select",
            o.select);
  book.bind(cmd.add_option("--d", o.cfg.d, "embedding width (default 100)"), "d", o.cfg.d);
  book.bind(cmd.add_option("--batch", o.cfg.batch_size, "batch size (default 100)"), "batch",
            o.cfg.batch_size);
  book.bind(cmd.add_option("--lr", o.cfg.lr0, "initial learning rate (default 0.001)"), "lr",
            o.cfg.lr0);
  book.bind(cmd.add_option("--decay-factor", o.cfg.decay_factor,
                           "learning-rate decay multiplier (default 0.1)"),
            "decay-factor", o.cfg.decay_factor);
  book.bind(cmd.add_option("--decay-every", o.cfg.decay_every,
                           "epochs between decay steps (default 3)"),
            "decay-every", o.cfg.decay_every);
  book.bind(cmd.add_option("--l2", o.cfg.l2, "L2 penalty (default 1e-5)"), "l2", o.cfg.l2);
  book.bind(cmd.add_option("--epochs", o.cfg.max_epochs, "epoch budget (default 30)"), "epochs",
            o.cfg.max_epochs);
  book.bind(cmd.add_option("--patience", o.cfg.patience,
                           "epochs without validation improvement before stopping (default 10)"),
            "patience", o.cfg.patience);
  book.bind(cmd.add_option("--seed", o.cfg.seed, "random seed (default 0)"), "seed", o.cfg.seed);
  book.bind(cmd.add_option("--ggnn-steps", o.cfg.ggnn_steps,
                           "graph propagation steps (default 1)"),
            "ggnn-steps", o.cfg.ggnn_steps);
  book.bind(cmd.add_option("--k", o.cfg.k, "metric cutoff (default 20)"), "k", o.cfg.k);
}

/// Effective configuration after merging, rendered as sorted key=value lines.
std::string effective_settings(const TrainOpts& o, const std::string& out) {
  std::map<std::string, std::string> kv;
  kv["data"] = o.data;
  kv["out"] = out;
  kv["variant"] = o.variant;
  kv["loss"] = o.loss;
  kv["select"] = o.select;
  kv["d"] = std::to_string(o.cfg.d);
  kv["batch"] = std::to_string(o.cfg.batch_size);
  kv["lr"] = fmt("%.6g", o.cfg.lr0);
  kv["decay-factor"] = fmt("%.6g", o.cfg.decay_factor);
  kv["decay-every"] = std::to_string(o.cfg.decay_every);
  kv["l2"] = fmt("%.6g", o.cfg.l2);
  kv["epochs"] = std::to_string(o.cfg.max_epochs);
  kv["patience"] = std::to_string(o.cfg.patience);
  kv["seed"] = std::to_string(o.cfg.seed);
  kv["ggnn-steps"] = std::to_string(o.cfg.ggnn_steps);
  kv["k"] = std::to_string(o.cfg.k);
  kv["threads"] = std::to_string(o.common.threads);
  std::string text;
  for (const auto& [key, value] : kv) text += key + "=" + value + "\n";
  return text;
}

constexpr const char* kLogHeader = "epoch,lr,train_loss,val_p20,val_mrr20\n";

std::string log_line(const tagnn::TrainLogLine& l) {
  return fmt("%d,%.6g,%.6f,%.2f,%.2f\n", l.epoch, l.lr, l.train_loss, l.val_precision, l.val_mrr);
}

void add_train(CLI::App& app, TrainOpts& o) {
  CLI::App& cmd = *app.add_subcommand("train", "fit a model on prepared data");
  o.common.add_to(cmd);
  ConfigBook& book = o.common.book;
  add_train_knobs(cmd, book, o, /*with_variant=*/true);
  book.bind(cmd.add_option("--out", o.out, "checkpoint path (default <data>/model.ckpt)"), "out",
            o.out);
  book.bind(cmd.add_flag("--dry-run", o.dry_run, "print the merged settings and exit"), "dry-run",
            o.dry_run);
  cmd.callback([&o] {
    o.common.finish();
    require_setting(o.data, "data");
    const std::string out = o.out.empty() ? in_dir(o.data, "model.ckpt") : o.out;
    tagnn::TrainConfig cfg = o.cfg;
    cfg.variant = tagnn::parse_variant(o.variant);
    cfg.loss_mode = tagnn::parse_loss_mode(o.loss);
    cfg.select_by_mrr = parse_select(o.select);
    tagnn::validate_config(cfg);

    if (o.dry_run) {
      std::cout << effective_settings(o, out);
      return;
    }

    const tagnn::Vocabulary vocab = tagnn::read_vocab(in_dir(o.data, "vocab.txt"));
    const auto examples =
        load_examples_checked(in_dir(o.data, "train.txt"), vocab.size(), "training");

    std::string log = kLogHeader;
    std::cout << kLogHeader;
    const tagnn::FitResult fit =
        tagnn::fit(examples, vocab.size(), cfg, [&log](const tagnn::TrainLogLine& l) {
          const std::string line = log_line(l);
          std::cout << line << std::flush;
          log += line;
        });

    tagnn::save_checkpoint(out, tagnn::make_checkpoint(fit.best_params,
                                                       checkpoint_metadata(cfg, vocab, fit)));
    write_text(out + ".log", log);
    std::cout << fmt("best_epoch=%d\n", fit.best_epoch);
    std::cout << fmt("best_val_%s=%s\n", o.select.c_str(),
                     tagnn::format_pct(fit.best_metric).c_str());
    std::cout << "checkpoint=" << out << "\n";
  });
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string vocab;
  int k = 20;
};

void add_evaluate(CLI::App& app, EvaluateOpts& o) {
  CLI::App& cmd = *app.add_subcommand("evaluate", "score a checkpoint on prepared examples");
  o.common.add_to(cmd);
  ConfigBook& book = o.common.book;
  book.bind(cmd.add_option("--checkpoint", o.checkpoint, "trained model checkpoint"), "checkpoint",
            o.checkpoint);
  book.bind(cmd.add_option("--data", o.data, "prepared data directory or examples file"), "data",
            o.data);
  book.bind(cmd.add_option("--vocab", o.vocab,
                           "vocabulary file (defaults to vocab.txt beside the data)"),
            "vocab", o.vocab);
  book.bind(cmd.add_option("--k", o.k, "ranking cutoff (default 20, clamped to the item count)"),
            "k", o.k);
  cmd.callback([&o] {
    o.common.finish();
    require_setting(o.checkpoint, "checkpoint");
    require_setting(o.data, "data");
    if (o.k < 1) tagnn::raise(ErrorKind::config, "k must be at least 1");

    const tagnn::Checkpoint c = tagnn::load_checkpoint(o.checkpoint);
    const tagnn::ModelParams params = tagnn::params_from_checkpoint(c);
    const std::string vocab_path = resolve_vocab_path(o.vocab, o.data);
    if (vocab_path.empty())
      tagnn::raise(ErrorKind::config,
                   "examples file given without --vocab; pass the vocabulary path");
    const std::string test_path =
        std::filesystem::is_directory(o.data) ? in_dir(o.data, "test.txt") : o.data;

    const tagnn::Vocabulary vocab = tagnn::read_vocab(vocab_path);
    require_matching_vocab(c, vocab);
    const int steps = parse_setting<int>("ggnn_steps", c.need("ggnn_steps"));
    const auto examples = load_examples_checked(test_path, vocab.size(), "test");
    const int k = std::min(o.k, params.m);

    const tagnn::Metrics metrics = tagnn::evaluate_examples(params, examples, k, steps);
    std::cout << tagnn::metrics_table(metrics) << tagnn::metrics_kv(metrics);
  });
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
  TrainOpts train;  // reuses the training knobs; `variant` is ignored
  std::string out;  // optional directory for per-variant checkpoints
};

void add_ablate(CLI::App& app, AblateOpts& o) {
  CLI::App& cmd = *app.add_subcommand(
      "ablate", "train every session-representation variant under one budget");
  o.train.common.add_to(cmd);
  ConfigBook& book = o.train.common.book;
  add_train_knobs(cmd, book, o.train, /*with_variant=*/false);
  book.bind(cmd.add_option("--out", o.out, "directory for per-variant checkpoints (optional)"),
            "out", o.out);
  cmd.callback([&o] {
    o.train.common.finish();
    require_setting(o.train.data, "data");
    tagnn::TrainConfig cfg = o.train.cfg;
    cfg.loss_mode = tagnn::parse_loss_mode(o.train.loss);
    cfg.select_by_mrr = parse_select(o.train.select);

    const tagnn::Vocabulary vocab = tagnn::read_vocab(in_dir(o.train.data, "vocab.txt"));
    const auto train_examples =
        load_examples_checked(in_dir(o.train.data, "train.txt"), vocab.size(), "training");
    const auto test_examples =
        load_examples_checked(in_dir(o.train.data, "test.txt"), vocab.size(), "test");
    if (!o.out.empty()) std::filesystem::create_directories(o.out);

    const int k = std::min(cfg.k, vocab.size());
    struct Row {
      tagnn::Variant variant;
      tagnn::Metrics metrics;
    };
    std::vector<Row> rows;
    const auto print_report = [&rows, k] {
      std::cout << fmt("%-12s %8s %8s\n", "variant", fmt("P@%d", k).c_str(),
                       fmt("MRR@%d", k).c_str());
      for (const Row& r : rows)
        std::cout << fmt("%-12s %8s %8s\n", tagnn::variant_name(r.variant),
                         tagnn::format_pct(r.metrics.precision_at_k).c_str(),
                         tagnn::format_pct(r.metrics.mrr_at_k).c_str());
      for (const Row& r : rows) {
        const char* name = tagnn::variant_name(r.variant);
        std::cout << fmt("%s.precision_at_%d=%s\n", name, k,
                         tagnn::format_pct(r.metrics.precision_at_k).c_str());
        std::cout << fmt("%s.mrr_at_%d=%s\n", name, k,
                         tagnn::format_pct(r.metrics.mrr_at_k).c_str());
      }
    };

    for (tagnn::Variant variant : tagnn::all_variants()) {
      cfg.variant = variant;
      tagnn::validate_config(cfg);
      try {
        const tagnn::FitResult fit = tagnn::fit(train_examples, vocab.size(), cfg);
        const tagnn::Metrics metrics =
            tagnn::evaluate_examples(fit.best_params, test_examples, k, cfg.ggnn_steps);
        if (!o.out.empty()) {
          const std::string path =
              in_dir(o.out, (std::string(tagnn::variant_name(variant)) + ".ckpt").c_str());
          tagnn::save_checkpoint(
              path, tagnn::make_checkpoint(fit.best_params, checkpoint_metadata(cfg, vocab, fit)));
        }
        rows.push_back(Row{variant, metrics});
        std::cout << fmt("variant %s: best_epoch=%d val_%s=%s\n", tagnn::variant_name(variant),
                         fit.best_epoch, select_name(cfg.select_by_mrr).c_str(),
                         tagnn::format_pct(fit.best_metric).c_str());
      } catch (const std::exception& e) {
        print_report();
        std::cout << fmt("note: sweep aborted, variant %s failed; results above are partial\n",
                         tagnn::variant_name(variant));
        throw;
      }
    }
    print_report();
  });
}

// ---------------------------------------------------------------------------
// predict

struct PredictOpts {
  Common common;
  std::string checkpoint;
  std::string vocab;
  std::string session;
  int k = 20;
  bool check_normalization = false;
  bool dump_graph = false;
};

std::vector<std::string> split_session_ids(const std::string& text) {
  std::vector<std::string> ids;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      ids.push_back(trimmed(current));
      current.clear();
    } else {
      current += c;
    }
  }
  ids.push_back(trimmed(current));
  for (const std::string& id : ids)
    if (id.empty())
      tagnn::raise(ErrorKind::config,
                   "session must be comma-separated item ids with no empty entries");
  return ids;
}

void add_predict(CLI::App& app, PredictOpts& o) {
  CLI::App& cmd = *app.add_subcommand("predict", "rank items for one session");
  o.common.add_to(cmd);
  ConfigBook& book = o.common.book;
  book.bind(cmd.add_option("--checkpoint", o.checkpoint, "trained model checkpoint"), "checkpoint",
            o.checkpoint);
  book.bind(cmd.add_option("--vocab", o.vocab, "vocabulary file or prepared data directory"),
            "vocab", o.vocab);
  book.bind(cmd.add_option("--session", o.session, "comma-separated external item ids, in order"),
            "session", o.session);
  book.bind(cmd.add_option("--k", o.k, "list length (default 20, clamped to the item count)"), "k",
            o.k);
  book.bind(cmd.add_flag("--check-normalization", o.check_normalization,
                         "verify the probabilities sum to 1"),
            "check-normalization", o.check_normalization);
  book.bind(cmd.add_flag("--dump-graph", o.dump_graph,
                         "print the session graph as `u -> v : weight` edges"),
            "dump-graph", o.dump_graph);
  cmd.callback([&o] {
    o.common.finish();
    require_setting(o.checkpoint, "checkpoint");
    require_setting(o.vocab, "vocab");
    require_setting(o.session, "session");
    if (o.k < 1) tagnn::raise(ErrorKind::config, "k must be at least 1");

    const tagnn::Checkpoint c = tagnn::load_checkpoint(o.checkpoint);
    const tagnn::ModelParams params = tagnn::params_from_checkpoint(c);
    const tagnn::Vocabulary vocab = tagnn::read_vocab(resolve_vocab_path(o.vocab, ""));
    require_matching_vocab(c, vocab);
    const int steps = parse_setting<int>("ggnn_steps", c.need("ggnn_steps"));

    std::vector<int> prefix;
    for (const std::string& id : split_session_ids(o.session))
      prefix.push_back(vocab.require(id));

    const tagnn::SessionGraph graph = tagnn::build_graph(prefix);
    if (o.dump_graph) {
      std::cout << fmt("# session graph: %d nodes\n", graph.n());
      for (int slot = 0; slot < graph.n(); ++slot)
        std::cout << fmt("# item %d: %s\n", graph.nodes[slot],
                         vocab.external[graph.nodes[slot]].c_str());
      std::cout << tagnn::graph_edge_list(graph);
    }

    tagnn::Tape tape;
    const tagnn::ModelLeaves leaves = tagnn::bind_params(tape, params, /*trainable=*/false);
    const tagnn::GraphVars graph_vars = tagnn::bind_graph(tape, graph);
    const tagnn::ForwardVars forward =
        tagnn::forward_probs(tape, leaves, graph_vars, params.variant, steps);
    const tagnn::Tensor& probs = tape.val(forward.probs);

    if (o.check_normalization) {
      double sum = 0.0;
      for (float p : probs.data) sum += p;
      if (std::abs(sum - 1.0) > 1e-6)
        tagnn::raise(ErrorKind::numeric,
                     fmt("probabilities sum to %.9f, expected 1 within 1e-6", sum));
      std::cout << "normalization ok: probabilities sum to 1 within 1e-6\n";
    }

    const int k = std::min(o.k, params.m);
    const std::vector<int> ranked = tagnn::rank_topk(probs.data, k);
    for (int rank = 0; rank < k; ++rank) {
      const int item = ranked[rank];
      std::cout << fmt("%d %s %.6f\n", rank + 1, vocab.external[item].c_str(),
                       static_cast<double>(probs.data[item]));
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"session-graph attention recommender"};
  app.require_subcommand(1);

  PreprocessOpts preprocess;
  TrainOpts train;
  EvaluateOpts evaluate;
  AblateOpts ablate;
  PredictOpts predict;
  add_preprocess(app, preprocess);
  add_train(app, train);
  add_evaluate(app, evaluate);
  add_ablate(app, ablate);
  add_predict(app, predict);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
