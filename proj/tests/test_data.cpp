#include "unicornn/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unicornn/analysis.hpp"
#include "unicornn/checkpoint.hpp"
#include "unicornn/init.hpp"
#include "unicornn/metrics.hpp"
#include "unicornn/rng.hpp"
#include "test_util.hpp"

namespace unicornn {
namespace {

std::filesystem::path tmp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("unicornn_test_" + name + "_" + std::to_string(::getpid()));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name) : path(tmp_path(name)) {
    std::filesystem::remove(path);
  }
  ~TempFile() { std::filesystem::remove(path); }
};

// High-accuracy reference states from an independent adaptive integrator
// (tolerances 1e-13), used to pin the fixed-step integration.
Vec lorenz_ref_f09() {
  Vec r(5);
  r << 0.87204959782688318, 0.89281619917097144, 0.92646477151452011,
      0.92224066552478412, 0.88542913463226902;
  return r;
}

Vec lorenz_ref_f8() {
  Vec r(5);
  r << 4.196286178481162, -0.20594902083036815, 5.9906670181335047,
      10.784940195834334, -1.1875084382654446;
  return r;
}

// ---------------------------------------------------------------------------
// Lorenz 96
// ---------------------------------------------------------------------------

TEST(Lorenz96, EquilibriumDerivativeIsZero) {
  for (double F : {0.9, 8.0, -3.0}) {
    const Vec x = Vec::Constant(5, F);
    const Vec dx = lorenz96_rhs(x, F);
    for (Index i = 0; i < 5; ++i) EXPECT_EQ(dx[i], 0.0);
  }
}

TEST(Lorenz96, FourthOrderConvergenceInRegularRegime) {
  Vec x0(5);
  x0 << 1.0, 0.8, 0.95, 0.85, 0.9;
  const Vec ref = lorenz_ref_f09();
  std::vector<double> hs = {0.08, 0.04, 0.02, 0.01};
  std::vector<double> errs;
  for (double h : hs) {
    const Mat tr = lorenz96_trajectory(
        x0, 0.9, 2, h, static_cast<int>(std::lround(2.0 / h)), 0);
    errs.push_back((tr.col(1) - ref).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(errs.back(), 1e-9);
  EXPECT_NEAR(fit_loglog_slope(hs, errs), 4.0, 0.15);
}

TEST(Lorenz96, TracksReferenceInChaoticRegime) {
  // Chaotic error amplification limits the match over a full time unit; the
  // pinned tolerance reflects that, not the integrator's local accuracy.
  Vec x0(5);
  x0 << 8.5, 7.9, 8.2, 7.6, 8.3;
  const Mat tr = lorenz96_trajectory(x0, 8.0, 2, 0.01, 100, 0);
  EXPECT_LE((tr.col(1) - lorenz_ref_f8()).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(Lorenz96, RegularRegimeTwinsStayClose) {
  Vec a0(5), b0(5);
  a0 << 1.0, 0.8, 0.95, 0.85, 0.9;
  b0 = a0;
  b0[0] += 1e-4;
  const Mat ta = lorenz96_trajectory(a0, 0.9, 1000, 0.01, 10, 0);
  const Mat tb = lorenz96_trajectory(b0, 0.9, 1000, 0.01, 10, 0);
  EXPECT_LE((ta.col(999) - tb.col(999)).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Lorenz96, ChaoticRegimeTwinsDiverge) {
  Vec a0(5), b0(5);
  a0 << 8.5, 7.9, 8.2, 7.6, 8.3;
  b0 = a0;
  b0[0] += 1e-8;
  const Mat ta = lorenz96_trajectory(a0, 8.0, 2000, 0.01, 10, 0);
  const Mat tb = lorenz96_trajectory(b0, 8.0, 2000, 0.01, 10, 0);
  double max_sep = 0.0;
  for (Index j = 0; j < 2000; ++j) {
    max_sep = std::max(max_sep,
                       (ta.col(j) - tb.col(j)).cwiseAbs().maxCoeff());
  }
  EXPECT_GE(max_sep, 1.0);
}

TEST(Lorenz96, GeneratorShapesTargetsAndDeterminism) {
  Lorenz96Options o;
  o.F = 0.9;
  o.n_seq = 4;
  o.seq_len = 60;
  o.seed = 5;
  const DatasetSplits a = lorenz96_generate(o);
  EXPECT_EQ(a.train.size(), 4);
  EXPECT_EQ(a.valid.size(), 4);
  EXPECT_EQ(a.test.size(), 4);
  EXPECT_EQ(a.train.d(), 5);
  EXPECT_EQ(a.train.steps(), 60);
  EXPECT_EQ(a.train.targets[0].rows(), 5);
  // one-step-ahead targets: target column j equals input column j+1 bitwise
  for (Index j = 0; j + 1 < 60; ++j) {
    EXPECT_EQ((a.train.targets[0].col(j) - a.train.inputs[0].col(j + 1))
                  .cwiseAbs()
                  .maxCoeff(),
              0.0);
  }
  const DatasetSplits b = lorenz96_generate(o);
  EXPECT_EQ((a.train.inputs[2] - b.train.inputs[2]).cwiseAbs().maxCoeff(), 0.0);
  // split streams are decorrelated
  EXPECT_GT((a.train.inputs[0] - a.valid.inputs[0]).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a.valid.inputs[0] - a.test.inputs[0]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lorenz96, ValidatesOptions) {
  Lorenz96Options o;
  o.seq_len = 1;
  EXPECT_THROW(lorenz96_generate(o), std::invalid_argument);
  o.seq_len = 10;
  o.dim = 3;
  EXPECT_THROW(lorenz96_generate(o), std::invalid_argument);
  EXPECT_THROW(lorenz96_rhs(Vec::Zero(3), 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Noise-padded classification
// ---------------------------------------------------------------------------

TEST(NoisePadded, SplitSizesAndShapes) {
  NoisePaddedOptions o;
  o.n_samples = 400;
  o.valid_count = 50;
  o.test_count = 50;
  const DatasetSplits s = noise_padded_task(o);
  EXPECT_EQ(s.train.size(), 300);
  EXPECT_EQ(s.valid.size(), 50);
  EXPECT_EQ(s.test.size(), 50);
  EXPECT_EQ(s.train.d(), 4);
  EXPECT_EQ(s.train.steps(), 1000);
  EXPECT_TRUE(s.train.classification());
  for (int label : s.train.labels) {
    EXPECT_GE(label, 0);
    EXPECT_LT(label, 4);
  }
}

TEST(NoisePadded, ContentEncodesTheLabel) {
  NoisePaddedOptions o;
  o.n_samples = 200;
  o.valid_count = 0;
  o.test_count = 0;
  const DatasetSplits s = noise_padded_task(o);
  for (Index i = 0; i < s.train.size(); ++i) {
    const Mat& x = s.train.inputs[i];
    int decoded = 0;
    for (int r = 0; r < 2; ++r) {
      const double mean = x.row(r).head(o.content_len).mean();
      if (mean > 0.5) decoded |= 1 << r;
    }
    EXPECT_EQ(decoded, s.train.labels[i]) << "sample " << i;
    // channels beyond the code sit at the midpoint during the content window
    for (int r = 2; r < 4; ++r) {
      EXPECT_NEAR(x.row(r).head(o.content_len).mean(), 0.5, 0.05);
    }
  }
}

TEST(NoisePadded, PaddingIsUninformativeNoise) {
  NoisePaddedOptions o;
  o.n_samples = 50;
  o.valid_count = 0;
  o.test_count = 0;
  const DatasetSplits s = noise_padded_task(o);
  for (Index i = 0; i < s.train.size(); ++i) {
    const Mat pad = s.train.inputs[i].rightCols(o.pad_len);
    EXPECT_GE(pad.minCoeff(), 0.0);
    EXPECT_LT(pad.maxCoeff(), 1.0);
    EXPECT_NEAR(pad.mean(), 0.5, 0.05);
  }
}

TEST(NoisePadded, DeterministicUnderSeed) {
  NoisePaddedOptions o;
  o.n_samples = 30;
  o.valid_count = 5;
  o.test_count = 5;
  const DatasetSplits a = noise_padded_task(o);
  const DatasetSplits b = noise_padded_task(o);
  EXPECT_EQ((a.test.inputs[4] - b.test.inputs[4]).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.train.labels, b.train.labels);
  o.seed = 1;
  const DatasetSplits c = noise_padded_task(o);
  EXPECT_GT((a.train.inputs[0] - c.train.inputs[0]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NoisePadded, PadZeroGivesPlainClassification) {
  NoisePaddedOptions o;
  o.n_samples = 10;
  o.pad_len = 0;
  o.valid_count = 0;
  o.test_count = 0;
  const DatasetSplits s = noise_padded_task(o);
  EXPECT_EQ(s.train.steps(), o.content_len);
}

TEST(NoisePadded, ValidatesOptions) {
  NoisePaddedOptions o;
  o.n_classes = 1;
  EXPECT_THROW(noise_padded_task(o), std::invalid_argument);
  o.n_classes = 17;
  EXPECT_THROW(noise_padded_task(o), std::invalid_argument);
  o.n_classes = 4;
  o.n_samples = 100;
  o.valid_count = 60;
  o.test_count = 40;
  EXPECT_THROW(noise_padded_task(o), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// CSV round trips
// ---------------------------------------------------------------------------

TEST(CsvSequences, RegressionRoundTripIsExact) {
  Lorenz96Options o;
  o.F = 0.9;
  o.n_seq = 3;
  o.seq_len = 20;
  o.seed = 9;
  const SequenceDataset ds = lorenz96_generate(o).train;
  TempFile f("csv_reg");
  save_csv_sequences(ds, f.path.string());
  const SequenceDataset back = load_csv_sequences(f.path.string());
  ASSERT_EQ(back.size(), ds.size());
  for (Index s = 0; s < ds.size(); ++s) {
    EXPECT_EQ((back.inputs[s] - ds.inputs[s]).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((back.targets[s] - ds.targets[s]).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(CsvSequences, ClassificationRoundTripIsExact) {
  NoisePaddedOptions o;
  o.n_samples = 5;
  o.content_len = 4;
  o.pad_len = 6;
  o.valid_count = 0;
  o.test_count = 0;
  const SequenceDataset ds = noise_padded_task(o).train;
  TempFile f("csv_cls");
  save_csv_sequences(ds, f.path.string());
  const SequenceDataset back = load_csv_sequences(f.path.string());
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.labels, ds.labels);
  for (Index s = 0; s < ds.size(); ++s) {
    EXPECT_EQ((back.inputs[s] - ds.inputs[s]).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(CsvSequences, HandWrittenFixtureParsesExactly) {
  TempFile f("csv_fixture");
  write_file(f.path,
             "seq_id,step,x_1,x_2,label\n"
             "1,1,0.5,-1.25,2\n"
             "1,2,0.75,3,2\n"
             "2,1,-0.125,0,0\n"
             "2,2,1e-3,4.5,0\n"
             "3,1,2.5,-0.5,1\n"
             "3,2,0,8,1\n");
  const SequenceDataset ds = load_csv_sequences(f.path.string());
  ASSERT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.d(), 2);
  EXPECT_EQ(ds.steps(), 2);
  EXPECT_EQ(ds.labels, (std::vector<int>{2, 0, 1}));
  EXPECT_EQ(ds.inputs[0](0, 0), 0.5);
  EXPECT_EQ(ds.inputs[0](1, 0), -1.25);
  EXPECT_EQ(ds.inputs[1](0, 1), 1e-3);
  EXPECT_EQ(ds.inputs[2](1, 1), 8.0);
}

TEST(CsvSequences, MalformedContentNamesTheLine) {
  TempFile f("csv_bad");
  write_file(f.path,
             "seq_id,step,x_1,label\n"
             "1,1,0.5,2\n"
             "1,2,abc,2\n");
  try {
    load_csv_sequences(f.path.string());
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos)
        << e.what();
  }

  write_file(f.path,
             "seq_id,step,x_1,label\n"
             "1,1,0.5,2,9\n");
  EXPECT_THROW(load_csv_sequences(f.path.string()), std::runtime_error);

  write_file(f.path,
             "seq_id,step,x_1,label\n"
             "1,1,0.5,2\n"
             "1,3,0.5,2\n");
  EXPECT_THROW(load_csv_sequences(f.path.string()), std::runtime_error);

  write_file(f.path,
             "seq_id,step,x_1,label\n"
             "1,1,0.5,2\n"
             "1,2,0.5,3\n");
  EXPECT_THROW(load_csv_sequences(f.path.string()), std::runtime_error);
}

TEST(CsvSequences, EmptyAndHeaderOnlyFilesError) {
  TempFile f("csv_empty");
  write_file(f.path, "");
  EXPECT_THROW(load_csv_sequences(f.path.string()), std::runtime_error);
  write_file(f.path, "seq_id,step,x_1,label\n");
  EXPECT_THROW(load_csv_sequences(f.path.string()), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

Checkpoint sample_checkpoint() {
  ModelConfig cfg;
  cfg.L = 3;
  cfg.m = 6;
  cfg.d = 4;
  cfg.out_dim = 3;
  cfg.dt = {0.1, 0.05, 0.2};
  cfg.alpha = 0.75;
  cfg.skip = 2;  // layer 3 carries a lambda matrix
  cfg.dropout = 0.1;
  cfg.readout = ReadoutMode::final_step;

  Checkpoint ckpt;
  ckpt.model = init_params(cfg, 13);
  Rng rng(mix_seed(14, 0));
  // make every serialized value distinctive, including the zero-initialized
  // tensors
  for (auto& p : ckpt.model.layers) {
    p.b = testutil::random_arr(rng, cfg.m, -1.0, 1.0);
    p.c = testutil::random_arr(rng, cfg.m, -1.0, 1.0);
  }

  OptimState opt;
  opt.lr = 3.14e-3;
  opt.step = 42;
  for (int t = 0; t < 3; ++t) {
    opt.m_buf.push_back(testutil::random_arr(rng, 5, -1.0, 1.0));
    opt.v_buf.push_back(testutil::random_arr(rng, 5, 0.0, 1.0));
  }
  ckpt.optim = std::move(opt);
  ckpt.meta = {"lorenz96", 17, 0.034519, 99};
  return ckpt;
}

TEST(Checkpoints, RoundTripIsBitExact) {
  const Checkpoint ckpt = sample_checkpoint();
  TempFile f("ckpt_rt");
  save_checkpoint(ckpt, f.path.string());
  const Checkpoint back = load_checkpoint(f.path.string());

  const ModelConfig &a = ckpt.model.config, &b = back.model.config;
  EXPECT_EQ(a.L, b.L);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.d, b.d);
  EXPECT_EQ(a.out_dim, b.out_dim);
  EXPECT_EQ(a.dt, b.dt);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.skip, b.skip);
  EXPECT_EQ(a.dropout, b.dropout);
  EXPECT_EQ(a.readout, b.readout);

  for (int ell = 0; ell < a.L; ++ell) {
    const LayerParams &p = ckpt.model.layers[ell], &q = back.model.layers[ell];
    EXPECT_EQ((p.w - q.w).abs().maxCoeff(), 0.0);
    EXPECT_EQ((p.V - q.V).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((p.b - q.b).abs().maxCoeff(), 0.0);
    EXPECT_EQ((p.c - q.c).abs().maxCoeff(), 0.0);
    EXPECT_EQ(p.lambda.has_value(), q.lambda.has_value());
    if (p.lambda) {
      EXPECT_EQ((*p.lambda - *q.lambda).cwiseAbs().maxCoeff(), 0.0);
    }
  }
  EXPECT_EQ((ckpt.model.readout_W - back.model.readout_W).cwiseAbs().maxCoeff(),
            0.0);
  EXPECT_EQ((ckpt.model.readout_b - back.model.readout_b).cwiseAbs().maxCoeff(),
            0.0);

  ASSERT_TRUE(back.optim.has_value());
  EXPECT_EQ(back.optim->lr, ckpt.optim->lr);
  EXPECT_EQ(back.optim->step, ckpt.optim->step);
  ASSERT_EQ(back.optim->m_buf.size(), ckpt.optim->m_buf.size());
  for (std::size_t t = 0; t < ckpt.optim->m_buf.size(); ++t) {
    EXPECT_EQ((back.optim->m_buf[t] - ckpt.optim->m_buf[t]).abs().maxCoeff(),
              0.0);
    EXPECT_EQ((back.optim->v_buf[t] - ckpt.optim->v_buf[t]).abs().maxCoeff(),
              0.0);
  }
  EXPECT_EQ(back.meta.task, "lorenz96");
  EXPECT_EQ(back.meta.epoch, 17);
  EXPECT_EQ(back.meta.metric, 0.034519);
  EXPECT_EQ(back.meta.seed, 99u);
}

TEST(Checkpoints, RoundTripWithoutOptimizerState) {
  Checkpoint ckpt = sample_checkpoint();
  ckpt.optim.reset();
  TempFile f("ckpt_noopt");
  save_checkpoint(ckpt, f.path.string());
  EXPECT_FALSE(load_checkpoint(f.path.string()).optim.has_value());
}

TEST(Checkpoints, UnknownVersionIsRejected) {
  const Checkpoint ckpt = sample_checkpoint();
  TempFile f("ckpt_ver");
  save_checkpoint(ckpt, f.path.string());
  std::string text = read_file(f.path);
  text.replace(text.find("unicornn-ckpt-1"), 15, "unicornn-ckpt-9");
  write_file(f.path, text);
  try {
    load_checkpoint(f.path.string());
    FAIL() << "expected a version error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoints, CorruptedFieldIsAParseErrorNotADefault) {
  const Checkpoint ckpt = sample_checkpoint();
  TempFile f("ckpt_corrupt");
  save_checkpoint(ckpt, f.path.string());
  std::string text = read_file(f.path);
  const std::size_t pos = text.find("layer_2_w 6 ");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos + 12, 4, "zoig");
  write_file(f.path, text);
  try {
    load_checkpoint(f.path.string());
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer_2_w"), std::string::npos)
        << e.what();
  }
}

TEST(Checkpoints, TruncationNamesTheMissingTensor) {
  const Checkpoint ckpt = sample_checkpoint();
  TempFile f("ckpt_trunc");
  save_checkpoint(ckpt, f.path.string());
  std::string text = read_file(f.path);
  text.resize(text.find("layer_3_b"));
  write_file(f.path, text);
  try {
    load_checkpoint(f.path.string());
    FAIL() << "expected a truncation error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer_3_b"), std::string::npos)
        << e.what();
  }
}

TEST(Checkpoints, LayerCountMismatchNamesTheLayer) {
  // A document claiming three layers but holding two must fail at the first
  // missing tensor, not load garbage.
  Checkpoint ckpt = sample_checkpoint();
  ckpt.model.config.skip = 0;
  for (auto& p : ckpt.model.layers) p.lambda.reset();
  TempFile f("ckpt_layers");
  save_checkpoint(ckpt, f.path.string());
  std::string text = read_file(f.path);
  // strip every layer-3 tensor while leaving the config at L = 3
  const std::size_t begin = text.find("layer_3_w");
  const std::size_t end = text.find("readout_W");
  ASSERT_NE(begin, std::string::npos);
  text.erase(begin, end - begin);
  write_file(f.path, text);
  try {
    load_checkpoint(f.path.string());
    FAIL() << "expected a shape error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer_3"), std::string::npos)
        << e.what();
  }
}

// ---------------------------------------------------------------------------
// Metrics files
// ---------------------------------------------------------------------------

std::vector<EpochMetrics> sample_history(int epochs) {
  std::vector<EpochMetrics> h;
  for (int e = 1; e <= epochs; ++e) {
    EpochMetrics em;
    em.epoch = e;
    em.train_loss = 1.0 / e;
    em.valid_metric = 0.5 + 0.1 * e;
    em.lr = 1e-3;
    em.wall_time_s = 0.25 * e;
    h.push_back(em);
  }
  return h;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TEST(MetricsFiles, HeaderAndRowLayout) {
  TempFile f("metrics_layout");
  const auto history = sample_history(1);
  write_metrics(history, f.path.string(), "accuracy");
  const std::string text = read_file(f.path);
  const std::string wall = fmt17(history[0].wall_time_s);
  EXPECT_EQ(text, "epoch,split,metric,value,wall_time_s\n"
                      "1,train,loss," + fmt17(history[0].train_loss) + "," + wall + "\n"
                      "1,valid,accuracy," + fmt17(history[0].valid_metric) + "," + wall + "\n"
                      "1,train,lr," + fmt17(history[0].lr) + "," + wall + "\n");
}

TEST(MetricsFiles, RereadEqualsWritten) {
  TempFile f("metrics_rt");
  const auto history = sample_history(3);
  write_metrics(history, f.path.string(), "nrmse");
  const auto rows = read_metrics(f.path.string());
  ASSERT_EQ(rows.size(), 9u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(rows[3 * e].epoch, history[e].epoch);
    EXPECT_EQ(rows[3 * e].split, "train");
    EXPECT_EQ(rows[3 * e].metric, "loss");
    EXPECT_EQ(rows[3 * e].value, history[e].train_loss);
    EXPECT_EQ(rows[3 * e].wall_time_s, history[e].wall_time_s);
    EXPECT_EQ(rows[3 * e + 1].split, "valid");
    EXPECT_EQ(rows[3 * e + 1].metric, "nrmse");
    EXPECT_EQ(rows[3 * e + 1].value, history[e].valid_metric);
    EXPECT_EQ(rows[3 * e + 2].metric, "lr");
  }
}

TEST(MetricsFiles, AppendKeepsASingleHeader) {
  TempFile f("metrics_append");
  write_metrics(sample_history(1), f.path.string());
  write_metrics(sample_history(2), f.path.string());
  const auto rows = read_metrics(f.path.string());
  EXPECT_EQ(rows.size(), 9u);
  const std::string text = read_file(f.path);
  EXPECT_EQ(text.find("epoch,split"), 0u);
  EXPECT_EQ(text.find("epoch,split", 1), std::string::npos);
}

TEST(MetricsFiles, ParseBackYieldsTheValidationSeries) {
  TempFile f("metrics_series");
  const auto history = sample_history(4);
  write_metrics(history, f.path.string(), "accuracy");
  std::vector<std::pair<int, double>> series;
  for (const auto& row : read_metrics(f.path.string())) {
    if (row.split == "valid" && row.metric == "accuracy") {
      series.emplace_back(row.epoch, row.value);
    }
  }
  ASSERT_EQ(series.size(), 4u);
  for (int e = 0; e < 4; ++e) {
    EXPECT_EQ(series[e].first, e + 1);
    EXPECT_EQ(series[e].second, history[e].valid_metric);
  }
}

TEST(MetricsFiles, MalformedRowsAndMissingHeaderError) {
  TempFile f("metrics_bad");
  write_file(f.path, "epoch,split,metric,value,wall_time_s\n1,train,loss,xyz,0\n");
  try {
    read_metrics(f.path.string());
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  write_file(f.path, "wrong,header\n");
  EXPECT_THROW(read_metrics(f.path.string()), std::runtime_error);
  EXPECT_THROW(write_metrics({}, f.path.string()), std::invalid_argument);
}

}  // namespace
}  // namespace unicornn
