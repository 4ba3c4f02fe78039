// unicornn: train, evaluate, verify, benchmark and generate data from one
// binary. Exit codes: 0 success, 1 check or metric failure, 2 usage/config
// error, 3 numerical divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "unicornn/analysis.hpp"
#include "unicornn/bench.hpp"
#include "unicornn/checkpoint.hpp"
#include "unicornn/data.hpp"
#include "unicornn/init.hpp"
#include "unicornn/metrics.hpp"
#include "unicornn/threads.hpp"
#include "unicornn/train.hpp"

namespace fs = std::filesystem;
using namespace unicornn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a run can configure, merged from (in order of increasing
// precedence) built-in defaults, a named preset, a config file, and command
// line flags.
struct RunConfig {
  // model
  int layers = 2;
  int units = 32;
  double dt = 0.1;
  double first_dt = 0.0;  // 0: use dt for layer 1 as well
  double alpha = 1.0;
  int skip = 0;
  double dropout = 0.0;
  // train
  int epochs = 10;
  double lr = 1e-3;
  int lr_drop_epoch = 0;
  double lr_drop_factor = 10.0;
  int batch = 32;
  std::uint64_t seed = 0;
  double clip = 0.0;
  int threads = 0;  // 0: UNICORNN_THREADS, then hardware threads
  std::string optimizer = "adam";
  // task
  std::string task = "lorenz96";
  double F = 0.9;
  int n_seq = 128;
  int seq_len = 2000;
  int n_classes = 4;
  int n_samples = 4000;
  int content_len = 32;
  int pad_len = 968;
  // paths
  std::string out;
  std::string data;
};

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

long parse_int_value(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    throw UsageError(where + ": not an integer: '" + v + "'");
  }
  if (pos != v.size()) throw UsageError(where + ": trailing junk in '" + v + "'");
  return out;
}

double parse_double_value(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw UsageError(where + ": not a number: '" + v + "'");
  }
  if (pos != v.size()) throw UsageError(where + ": trailing junk in '" + v + "'");
  return out;
}

// One setter shared by presets and config files so both paths hit the same
// validation and the echoed config can be fed back in unchanged.
void apply_kv(RunConfig& cfg, const std::string& section, const std::string& key,
              const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  const auto num = [&] { return parse_double_value(value, where); };
  const auto integer = [&] { return parse_int_value(value, where); };
  if (section == "model") {
    if (key == "layers") cfg.layers = static_cast<int>(integer());
    else if (key == "units") cfg.units = static_cast<int>(integer());
    else if (key == "dt") cfg.dt = num();
    else if (key == "first-dt") cfg.first_dt = num();
    else if (key == "alpha") cfg.alpha = num();
    else if (key == "skip") cfg.skip = static_cast<int>(integer());
    else if (key == "dropout") cfg.dropout = num();
    else throw UsageError("unknown config key: " + where);
  } else if (section == "train") {
    if (key == "epochs") cfg.epochs = static_cast<int>(integer());
    else if (key == "lr") cfg.lr = num();
    else if (key == "lr-drop-epoch") cfg.lr_drop_epoch = static_cast<int>(integer());
    else if (key == "lr-drop-factor") cfg.lr_drop_factor = num();
    else if (key == "batch") cfg.batch = static_cast<int>(integer());
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else if (key == "clip") cfg.clip = num();
    else if (key == "threads") cfg.threads = static_cast<int>(integer());
    else if (key == "optimizer") cfg.optimizer = value;
    else throw UsageError("unknown config key: " + where);
  } else if (section == "task") {
    if (key == "name") cfg.task = value;
    else if (key == "F") cfg.F = num();
    else if (key == "n-seq") cfg.n_seq = static_cast<int>(integer());
    else if (key == "seq-len") cfg.seq_len = static_cast<int>(integer());
    else if (key == "n-classes") cfg.n_classes = static_cast<int>(integer());
    else if (key == "n-samples") cfg.n_samples = static_cast<int>(integer());
    else if (key == "content-len") cfg.content_len = static_cast<int>(integer());
    else if (key == "pad-len") cfg.pad_len = static_cast<int>(integer());
    else throw UsageError("unknown config key: " + where);
  } else if (section == "paths") {
    if (key == "out") cfg.out = value;
    else if (key == "data") cfg.data = value;
    else throw UsageError("unknown config key: " + where);
  } else {
    throw UsageError("unknown config section: [" + section + "]");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file not found: " + path);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(line_no) +
                       ": expected 'key = value'");
    if (section.empty())
      throw UsageError(path + ":" + std::to_string(line_no) +
                       ": key before any [section]");
    apply_kv(cfg, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

struct PresetEntry {
  const char* section;
  const char* key;
  const char* value;
};

// Published recipes carry only learning rate, dropout, batch size, dt and
// alpha (plus the documented first-layer dt exceptions); everything else
// stays at the defaults. The lorenz/noise presets are complete desk-scale
// recipes used by the acceptance checks.
const std::vector<std::pair<std::string, std::vector<PresetEntry>>> kPresets = {
    {"noise-cifar",
     {{"train", "lr", "3.14e-2"}, {"model", "dropout", "0.1"},
      {"train", "batch", "30"}, {"model", "dt", "1.26e-1"},
      {"model", "alpha", "13.0"}}},
    {"psmnist-128",
     {{"train", "lr", "1.14e-3"}, {"model", "dropout", "0.1"},
      {"train", "batch", "64"}, {"model", "dt", "4.82e-1"},
      {"model", "alpha", "12.53"}}},
    {"psmnist-256",
     {{"train", "lr", "2.51e-3"}, {"model", "dropout", "0.1"},
      {"train", "batch", "32"}, {"model", "dt", "1.9e-1"},
      {"model", "alpha", "30.65"}}},
    {"imdb",
     {{"train", "lr", "1.67e-4"}, {"model", "dropout", "0.61"},
      {"train", "batch", "32"}, {"model", "dt", "2.05e-1"},
      {"model", "alpha", "0.0"}, {"model", "first-dt", "6.6e-3"}}},
    {"eigenworms",
     {{"train", "lr", "8.59e-3"}, {"model", "dropout", "0.0"},
      {"train", "batch", "8"}, {"model", "dt", "3.43e-2"},
      {"model", "alpha", "0.0"}, {"model", "first-dt", "2.81e-5"}}},
    {"health-rr",
     {{"train", "lr", "3.98e-3"}, {"model", "dropout", "0.1"},
      {"train", "batch", "32"}, {"model", "dt", "1.1e-2"},
      {"model", "alpha", "9.0"}}},
    {"health-hr",
     {{"train", "lr", "2.88e-3"}, {"model", "dropout", "0.1"},
      {"train", "batch", "32"}, {"model", "dt", "4.6e-2"},
      {"model", "alpha", "10.0"}}},
    {"lorenz-f09",
     {{"task", "name", "lorenz96"}, {"task", "F", "0.9"},
      {"task", "n-seq", "128"}, {"task", "seq-len", "2000"},
      {"model", "layers", "2"}, {"model", "units", "32"},
      {"model", "dt", "0.1"}, {"model", "alpha", "1.0"},
      {"train", "epochs", "60"}, {"train", "lr", "3e-3"},
      {"train", "batch", "16"}, {"train", "lr-drop-epoch", "40"}}},
    {"lorenz-f8",
     {{"task", "name", "lorenz96"}, {"task", "F", "8"},
      {"task", "n-seq", "128"}, {"task", "seq-len", "2000"},
      {"model", "layers", "2"}, {"model", "units", "32"},
      {"model", "dt", "0.1"}, {"model", "alpha", "1.0"},
      {"train", "epochs", "60"}, {"train", "lr", "3e-3"},
      {"train", "batch", "16"}, {"train", "lr-drop-epoch", "40"}}},
    {"noise-padded",
     {{"task", "name", "noise-padded"},
      {"model", "layers", "3"}, {"model", "units", "64"},
      {"model", "dt", "1.26e-1"}, {"model", "alpha", "13.0"},
      {"model", "dropout", "0.1"}, {"train", "lr", "1e-2"},
      {"train", "batch", "30"}, {"train", "epochs", "20"}}},
};

void apply_preset(RunConfig& cfg, const std::string& name) {
  for (const auto& [pname, entries] : kPresets) {
    if (pname != name) continue;
    for (const PresetEntry& e : entries) apply_kv(cfg, e.section, e.key, e.value);
    return;
  }
  std::string names;
  for (const auto& [pname, entries] : kPresets) {
    (void)entries;
    names += names.empty() ? pname : ", " + pname;
  }
  throw UsageError("unknown preset '" + name + "' (available: " + names + ")");
}

void echo_config(const RunConfig& cfg, std::ostream& out) {
  out << "# effective configuration\n";
  out << "[model]\n";
  out << "layers = " << cfg.layers << "\n";
  out << "units = " << cfg.units << "\n";
  out << "dt = " << fmt17(cfg.dt) << "\n";
  out << "first-dt = " << fmt17(cfg.first_dt) << "\n";
  out << "alpha = " << fmt17(cfg.alpha) << "\n";
  out << "skip = " << cfg.skip << "\n";
  out << "dropout = " << fmt17(cfg.dropout) << "\n";
  out << "[train]\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "lr = " << fmt17(cfg.lr) << "\n";
  out << "lr-drop-epoch = " << cfg.lr_drop_epoch << "\n";
  out << "lr-drop-factor = " << fmt17(cfg.lr_drop_factor) << "\n";
  out << "batch = " << cfg.batch << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "clip = " << fmt17(cfg.clip) << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "optimizer = " << cfg.optimizer << "\n";
  out << "[task]\n";
  out << "name = " << cfg.task << "\n";
  out << "F = " << fmt17(cfg.F) << "\n";
  out << "n-seq = " << cfg.n_seq << "\n";
  out << "seq-len = " << cfg.seq_len << "\n";
  out << "n-classes = " << cfg.n_classes << "\n";
  out << "n-samples = " << cfg.n_samples << "\n";
  out << "content-len = " << cfg.content_len << "\n";
  out << "pad-len = " << cfg.pad_len << "\n";
  out << "[paths]\n";
  out << "out = " << cfg.out << "\n";
  out << "data = " << cfg.data << "\n";
}

int cli_threads(int requested) {
  if (requested > 0) return requested;
  if (std::getenv("UNICORNN_THREADS") != nullptr) return resolve_threads(0);
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

SequenceDataset load_csv_or_die(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("dataset path not found: " + path);
  return load_csv_sequences(path);
}

DatasetSplits build_datasets(const RunConfig& cfg) {
  if (cfg.task == "lorenz96") {
    Lorenz96Options o;
    o.F = cfg.F;
    o.n_seq = cfg.n_seq;
    o.seq_len = cfg.seq_len;
    o.seed = cfg.seed;
    return lorenz96_generate(o);
  }
  if (cfg.task == "noise-padded") {
    NoisePaddedOptions o;
    o.n_samples = cfg.n_samples;
    o.content_len = cfg.content_len;
    o.pad_len = cfg.pad_len;
    o.n_classes = cfg.n_classes;
    o.seed = cfg.seed;
    return noise_padded_task(o);
  }
  if (cfg.task == "csv") {
    if (cfg.data.empty())
      throw UsageError("task csv requires --data DIR with train/valid/test.csv");
    DatasetSplits s;
    s.train = load_csv_or_die(cfg.data + "/train.csv");
    s.valid = load_csv_or_die(cfg.data + "/valid.csv");
    s.test = load_csv_or_die(cfg.data + "/test.csv");
    return s;
  }
  throw UsageError("unknown task '" + cfg.task +
                   "' (available: lorenz96, noise-padded, csv)");
}

ModelConfig model_config_from(const RunConfig& cfg, const DatasetSplits& data) {
  ModelConfig mc;
  mc.L = cfg.layers;
  mc.m = cfg.units;
  mc.d = data.train.d();
  if (data.train.classification()) {
    int max_label = 0;
    for (const SequenceDataset* ds : {&data.train, &data.valid, &data.test})
      for (int l : ds->labels) max_label = std::max(max_label, l);
    mc.out_dim = std::max(2, max_label + 1);
    mc.readout = ReadoutMode::final_step;
  } else {
    mc.out_dim = data.train.targets[0].rows();
    mc.readout = ReadoutMode::per_step;
  }
  mc.dt.assign(cfg.layers, cfg.dt);
  if (cfg.first_dt > 0.0) mc.dt[0] = cfg.first_dt;
  mc.alpha = cfg.alpha;
  mc.skip = cfg.skip;
  mc.dropout = cfg.dropout;
  return mc;
}

long count_params(Model& model) {
  long total = 0;
  for (const TensorRef& r : param_refs(model)) total += r.size;
  return total;
}

int cmd_train(RunConfig cfg) {
  const int threads = cli_threads(cfg.threads);
  if (cfg.out.empty()) cfg.out = "runs/" + cfg.task;

  const DatasetSplits data = build_datasets(cfg);
  const char* metric_name = data.train.classification() ? "accuracy" : "nrmse";
  std::cout << "task " << cfg.task << ": train/valid/test = "
            << data.train.size() << "/" << data.valid.size() << "/"
            << data.test.size() << " sequences, d=" << data.train.d()
            << ", steps=" << data.train.steps() << "\n";

  const ModelConfig mc = model_config_from(cfg, data);
  Model initial = init_params(mc, cfg.seed);
  std::cout << "model: L=" << mc.L << " m=" << mc.m << " out=" << mc.out_dim
            << " params=" << count_params(initial) << " readout="
            << (mc.readout == ReadoutMode::per_step ? "per-step" : "final-step")
            << "\n";

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.lr = cfg.lr;
  tc.lr_drop_epoch = cfg.lr_drop_epoch;
  tc.lr_drop_factor = cfg.lr_drop_factor;
  tc.batch_size = cfg.batch;
  tc.seed = cfg.seed;
  tc.clip_norm = cfg.clip;
  tc.threads = threads;
  if (cfg.optimizer == "sgd") tc.sgd = true;
  else if (cfg.optimizer != "adam")
    throw UsageError("unknown optimizer '" + cfg.optimizer + "' (adam|sgd)");

  const FitResult fr = fit(initial, data.train, data.valid, tc);
  for (const EpochMetrics& em : fr.history) {
    std::printf("epoch %3d  train loss %-12.6g valid %s %-10.4g lr %-8.3g %.1fs\n",
                em.epoch, em.train_loss, metric_name, em.valid_metric, em.lr,
                em.wall_time_s);
  }

  fs::create_directories(cfg.out);
  {
    std::ofstream echo(cfg.out + "/config.txt");
    if (!echo) throw UsageError("cannot write " + cfg.out + "/config.txt");
    echo_config(cfg, echo);
  }
  if (!fr.history.empty()) {
    fs::remove(cfg.out + "/metrics.csv");  // fresh run, fresh file
    write_metrics(fr.history, cfg.out + "/metrics.csv", metric_name);
  }

  if (fr.diverged) {
    std::cerr << "training diverged (non-finite loss or parameter); wrote "
              << "partial history to " << cfg.out << "/metrics.csv\n";
    return 3;
  }

  Checkpoint ckpt;
  ckpt.model = fr.best;
  ckpt.meta.task = cfg.task;
  ckpt.meta.epoch = fr.best_epoch;
  ckpt.meta.metric = fr.history[fr.best_epoch - 1].valid_metric;
  ckpt.meta.seed = cfg.seed;
  save_checkpoint(ckpt, cfg.out + "/best.ckpt");

  const EvalSummary vs = evaluate(fr.best, data.valid, cfg.batch, threads);
  const EvalSummary ts = evaluate(fr.best, data.test, cfg.batch, threads);
  std::printf("best epoch %d: valid %s %.6g\n", fr.best_epoch, metric_name,
              vs.metric);
  std::printf("test: loss %.6g  %s %.6g\n", ts.mean_loss, metric_name,
              ts.metric);
  std::cout << "wrote " << cfg.out << "/{config.txt, metrics.csv, best.ckpt}\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
             double expect_min, double expect_max) {
  const int threads = cli_threads(cfg.threads);
  if (!fs::exists(ckpt_path))
    throw UsageError("checkpoint not found: " + ckpt_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);

  SequenceDataset data;
  if (!cfg.data.empty()) {
    data = load_csv_or_die(cfg.data);
  } else {
    data = build_datasets(cfg).test;
  }
  const char* metric_name = data.classification() ? "accuracy" : "nrmse";
  const EvalSummary s = evaluate(ckpt.model, data, cfg.batch, threads);
  std::printf("eval: %lld sequences  loss %.6g  %s %.6g\n",
              static_cast<long long>(data.size()), s.mean_loss, metric_name,
              s.metric);
  if (expect_min == expect_min && s.metric < expect_min) {
    std::cerr << metric_name << " " << s.metric << " below required "
              << expect_min << "\n";
    return 1;
  }
  if (expect_max == expect_max && s.metric > expect_max) {
    std::cerr << metric_name << " " << s.metric << " above allowed "
              << expect_max << "\n";
    return 1;
  }
  return 0;
}

const std::vector<std::pair<std::string, std::vector<std::string>>> kSuites = {
    {"all", {}},
    {"inversion", {"inversion"}},
    {"volume", {"step-jacobian-det", "chain-det"}},
    {"state-bounds", {"state-bounds"}},
    {"grad-bound", {"gradient-bound"}},
    {"fd-match", {"step-jacobian-vs-fd", "chain-vs-perturbation", "grad-vs-fd"}},
    {"vanishing-probe", {"vanishing-remainder-order", "vanishing-k-profile"}},
    {"scaling-probe", {"scaling-fc-l3", "scaling-res-l7s3", "scaling-fc-l7"}},
};

int cmd_verify(const std::string& suite, std::uint64_t seed,
               double grad_corruption) {
  const std::vector<std::string>* selected = nullptr;
  for (const auto& [name, checks] : kSuites) {
    if (name == suite) selected = &checks;
  }
  if (selected == nullptr) {
    std::string names;
    for (const auto& [name, checks] : kSuites) {
      (void)checks;
      names += names.empty() ? name : ", " + name;
    }
    throw UsageError("unknown suite '" + suite + "' (available: " + names + ")");
  }

  VerifyOptions opts;
  opts.seed = seed;
  opts.grad_corruption = grad_corruption;
  const std::vector<CheckResult> results = run_verification_suite(opts);

  int failures = 0, selected_count = 0;
  for (const CheckResult& r : results) {
    if (!selected->empty() &&
        std::find(selected->begin(), selected->end(), r.name) ==
            selected->end())
      continue;
    ++selected_count;
    failures += r.pass ? 0 : 1;
    std::printf("%-28s %-4s  measured %-12.5g limit %-10.3g %s\n",
                r.name.c_str(), r.pass ? "PASS" : "FAIL", r.value, r.threshold,
                r.detail.c_str());
  }
  std::printf("%d/%d checks passed\n", selected_count - failures,
              selected_count);
  return failures == 0 ? 0 : 1;
}

int cmd_bench(const BenchConfig& bc, const std::string& csv_path) {
  const BenchReport report = run_benchmark(bc);
  std::printf("bench: N=%lld m=%lld L=%d batch=%lld reps=%d\n",
              static_cast<long long>(bc.N), static_cast<long long>(bc.m), bc.L,
              static_cast<long long>(bc.batch), bc.reps);
  std::printf("fused  mean %.6f s per combined forward+backward pass\n",
              report.fused_mean_s);
  std::printf("naive  mean %.6f s per combined forward+backward pass\n",
              report.naive_mean_s);
  std::printf("speedup %.2fx, implementation agreement %.3g\n",
              report.naive_mean_s / report.fused_mean_s, report.agreement);
  if (csv_path.empty()) {
    write_bench_csv(report, std::cout);
  } else {
    std::ofstream out(csv_path);
    if (!out) throw UsageError("cannot write " + csv_path);
    write_bench_csv(report, out);
    std::cout << "wrote " << csv_path << "\n";
  }
  return 0;
}

int cmd_gen_data(const RunConfig& cfg) {
  if (cfg.out.empty()) throw UsageError("gen-data requires --out DIR");
  const DatasetSplits data = build_datasets(cfg);
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw UsageError("cannot create " + cfg.out + ": " + ec.message());
  save_csv_sequences(data.train, cfg.out + "/train.csv");
  save_csv_sequences(data.valid, cfg.out + "/valid.csv");
  save_csv_sequences(data.test, cfg.out + "/test.csv");
  std::cout << "wrote " << data.train.size() << "/" << data.valid.size() << "/"
            << data.test.size() << " sequences to " << cfg.out
            << "/{train,valid,test}.csv\n";
  return 0;
}

std::string peek_value(int argc, char** argv, const std::string& name) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == name && i + 1 < argc) return argv[i + 1];
    if (a.rfind(name + "=", 0) == 0) return a.substr(name.size() + 1);
  }
  return "";
}

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--layers", cfg.layers, "stack depth L")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--units", cfg.units, "hidden width m per layer")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--dt", cfg.dt, "maximum integrator step per layer")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--first-dt", cfg.first_dt,
                  "override dt for layer 1 only (0: use --dt)");
  cmd->add_option("--alpha", cfg.alpha, "oscillator damping/control parameter");
  cmd->add_option("--skip", cfg.skip,
                  "residual connection distance in layers (0: dense stack)");
  cmd->add_option("--dropout", cfg.dropout,
                  "variational dropout rate between stacked layers");
}

void add_train_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", cfg.lr, "learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--lr-drop-epoch", cfg.lr_drop_epoch,
                  "epoch after which the rate is divided (0: never)");
  cmd->add_option("--lr-drop-factor", cfg.lr_drop_factor,
                  "divisor applied at the drop epoch");
  cmd->add_option("--batch", cfg.batch, "sequences per mini-batch")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--clip", cfg.clip,
                  "global gradient-norm clip (0: no clipping)");
  cmd->add_option("--optimizer", cfg.optimizer, "adam or sgd");
}

void add_task_options(CLI::App* cmd, RunConfig& cfg, bool with_name) {
  if (with_name)
    cmd->add_option("--task", cfg.task, "lorenz96, noise-padded or csv");
  cmd->add_option("--F", cfg.F, "Lorenz 96 forcing (0.9 regular, 8 chaotic)");
  cmd->add_option("--n-seq", cfg.n_seq, "Lorenz 96 sequences per split")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seq-len", cfg.seq_len, "Lorenz 96 records per sequence")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--n-classes", cfg.n_classes, "noise-padded class count");
  cmd->add_option("--n-samples", cfg.n_samples, "noise-padded sample count");
  cmd->add_option("--content-len", cfg.content_len,
                  "noise-padded content steps");
  cmd->add_option("--pad-len", cfg.pad_len, "noise-padded noise steps");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  std::string config_path, preset_name;
  try {
    // preset first, config file second, flags last; the CLI parse below then
    // overwrites exactly the fields that were given explicitly
    preset_name = peek_value(argc, argv, "--preset");
    config_path = peek_value(argc, argv, "--config");
    if (!preset_name.empty()) apply_preset(cfg, preset_name);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{
      "unicornn: memory-efficient invertible oscillatory recurrent networks.\n"
      "Exit codes: 0 ok, 1 check/metric failure, 2 usage error, 3 divergence.",
      "unicornn"};
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand(
      "train", "Train a model; writes metrics, config echo and best checkpoint");
  train->add_option("--config", config_path,
                    "config file (sections [model] [train] [task] [paths])");
  train->add_option("--preset", preset_name,
                    "named recipe applied before config file and flags");
  add_model_options(train, cfg);
  add_train_options(train, cfg);
  add_task_options(train, cfg, true);
  train->add_option("--seed", cfg.seed, "seed for data, init and shuffling");
  train->add_option("--threads", cfg.threads,
                    "worker threads (0: UNICORNN_THREADS, then all cores)");
  train->add_option("--data", cfg.data, "dataset directory for --task csv");
  train->add_option("--out", cfg.out, "run directory (default runs/<task>)");

  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint on a CSV file or a regenerated task split");
  std::string ckpt_path;
  double expect_min = std::numeric_limits<double>::quiet_NaN();
  double expect_max = std::numeric_limits<double>::quiet_NaN();
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file to load")
      ->required();
  eval->add_option("--data", cfg.data, "CSV file to evaluate on");
  add_task_options(eval, cfg, true);
  eval->add_option("--seed", cfg.seed, "seed for task regeneration");
  eval->add_option("--batch", cfg.batch, "sequences per evaluation batch");
  eval->add_option("--threads", cfg.threads,
                   "worker threads (0: UNICORNN_THREADS, then all cores)");
  eval->add_option("--expect-min", expect_min,
                   "exit 1 if the metric falls below this");
  eval->add_option("--expect-max", expect_max,
                   "exit 1 if the metric rises above this");

  CLI::App* verify = app.add_subcommand(
      "verify", "Run the numerical verification battery and print a table");
  std::string suite = "all";
  std::uint64_t verify_seed = 1;
  double grad_corruption = 0.0;
  verify->add_option("--suite", suite,
                     "all, inversion, volume, state-bounds, grad-bound, "
                     "fd-match, vanishing-probe or scaling-probe");
  verify->add_option("--seed", verify_seed, "seed for the random instances");
  verify->add_option("--grad-corruption", grad_corruption,
                     "fault injection: bias one analytic gradient coordinate "
                     "(nonzero must fail fd-match; tests the checker)");

  CLI::App* bench = app.add_subcommand(
      "bench", "Time the fused engine against the naive per-step reference");
  BenchConfig bc;
  std::string bench_csv;
  bench->add_option("--N", bc.N, "sequence length")->check(CLI::PositiveNumber);
  bench->add_option("--m", bc.m, "hidden width")->check(CLI::PositiveNumber);
  bench->add_option("--L", bc.L, "stack depth")->check(CLI::PositiveNumber);
  bench->add_option("--batch", bc.batch, "sequences per timed pass")
      ->check(CLI::PositiveNumber);
  bench->add_option("--in-dim", bc.in_dim, "input dimension")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out-dim", bc.out_dim, "readout dimension")
      ->check(CLI::PositiveNumber);
  bench->add_option("--reps", bc.reps, "timed passes per implementation")
      ->check(CLI::PositiveNumber);
  bench->add_option("--seed", bc.seed, "seed for weights and data");
  bench->add_option("--csv", bench_csv,
                    "write per-rep timings here instead of stdout");

  CLI::App* gen = app.add_subcommand("gen-data",
                                     "Generate a dataset and write CSV splits");
  gen->add_option("task", cfg.task, "lorenz96 or noise-padded")->required();
  add_task_options(gen, cfg, false);
  gen->add_option("--seed", cfg.seed, "generator seed");
  gen->add_option("--out", cfg.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg, ckpt_path, expect_min, expect_max);
    if (*verify) return cmd_verify(suite, verify_seed, grad_corruption);
    if (*bench) return cmd_bench(bc, bench_csv);
    if (*gen) return cmd_gen_data(cfg);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
