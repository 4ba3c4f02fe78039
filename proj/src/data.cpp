#include "unicornn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unicornn/rng.hpp"

namespace unicornn {

namespace {

void rk4_step(Vec& x, double F, double h) {
  const Vec k1 = lorenz96_rhs(x, F);
  const Vec k2 = lorenz96_rhs(x + 0.5 * h * k1, F);
  const Vec k3 = lorenz96_rhs(x + 0.5 * h * k2, F);
  const Vec k4 = lorenz96_rhs(x + h * k3, F);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

SequenceDataset lorenz_split(const Lorenz96Options& o, Rng& rng) {
  SequenceDataset ds;
  const Index n_record = o.seq_len + o.horizon;
  for (int s = 0; s < o.n_seq; ++s) {
    Vec x0(o.dim);
    for (Index i = 0; i < o.dim; ++i) x0[i] = o.F + rng.uniform(-0.5, 0.5);
    const Mat states = lorenz96_trajectory(x0, o.F, n_record, o.internal_step,
                                           o.stride, o.burn_in);
    ds.inputs.push_back(states.leftCols(o.seq_len));
    ds.targets.push_back(states.rightCols(o.seq_len));
  }
  ds.validate();
  return ds;
}

}  // namespace

Vec lorenz96_rhs(const Vec& x, double F) {
  const Index n = x.size();
  require(n >= 4, "lorenz96_rhs: needs at least 4 components");
  Vec dx(n);
  for (Index i = 0; i < n; ++i) {
    const double xp1 = x[(i + 1) % n];
    const double xm1 = x[(i - 1 + n) % n];
    const double xm2 = x[(i - 2 + n) % n];
    dx[i] = (xp1 - xm2) * xm1 - x[i] + F;
  }
  return dx;
}

Mat lorenz96_trajectory(const Vec& x0, double F, Index n_record, double h,
                        int stride, int burn_in) {
  require(std::isfinite(F), "lorenz96_trajectory: F must be finite");
  require(n_record >= 1, "lorenz96_trajectory: need at least one record");
  require(h > 0.0, "lorenz96_trajectory: step must be positive");
  require(stride >= 1, "lorenz96_trajectory: stride must be >= 1");
  require(burn_in >= 0, "lorenz96_trajectory: burn-in must be >= 0");

  Vec x = x0;
  for (int i = 0; i < burn_in; ++i) rk4_step(x, F, h);
  Mat out(x0.size(), n_record);
  out.col(0) = x;
  for (Index r = 1; r < n_record; ++r) {
    for (int i = 0; i < stride; ++i) rk4_step(x, F, h);
    out.col(r) = x;
  }
  return out;
}

DatasetSplits lorenz96_generate(const Lorenz96Options& opts) {
  require(opts.n_seq >= 1, "lorenz96_generate: n_seq must be >= 1");
  require(opts.seq_len >= 2, "lorenz96_generate: seq_len must be >= 2");
  require(opts.horizon >= 1, "lorenz96_generate: horizon must be >= 1");
  require(opts.dim >= 4, "lorenz96_generate: dim must be >= 4");

  DatasetSplits splits;
  Rng train_rng(mix_seed(opts.seed, 0x6c7a00));  // lz + split tag
  Rng valid_rng(mix_seed(opts.seed, 0x6c7a01));
  Rng test_rng(mix_seed(opts.seed, 0x6c7a02));
  splits.train = lorenz_split(opts, train_rng);
  splits.valid = lorenz_split(opts, valid_rng);
  splits.test = lorenz_split(opts, test_rng);
  return splits;
}

DatasetSplits noise_padded_task(const NoisePaddedOptions& opts) {
  require(opts.n_samples >= 1, "noise_padded_task: n_samples must be >= 1");
  require(opts.content_len >= 1, "noise_padded_task: content_len must be >= 1");
  require(opts.pad_len >= 0, "noise_padded_task: pad_len must be >= 0");
  require(opts.n_classes >= 2 && opts.n_classes <= 16,
          "noise_padded_task: n_classes must lie in [2, 16]");
  require(opts.valid_count >= 0 && opts.test_count >= 0 &&
              opts.valid_count + opts.test_count < opts.n_samples,
          "noise_padded_task: split counts exceed the sample budget");

  const Index d = 4;
  const Index N = opts.content_len + opts.pad_len;
  int bits = 0;
  while ((1 << bits) < opts.n_classes) ++bits;

  Rng rng(mix_seed(opts.seed, 0x6e70));  // np
  DatasetSplits out;
  const int train_count = opts.n_samples - opts.valid_count - opts.test_count;
  for (int s = 0; s < opts.n_samples; ++s) {
    const int label = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(opts.n_classes)));
    Mat x(d, N);
    for (Index j = 0; j < opts.content_len; ++j) {
      for (Index r = 0; r < d; ++r) {
        const double level =
            r < bits ? ((label >> r) & 1 ? 0.8 : 0.2) : 0.5;
        x(r, j) = level + rng.uniform(-0.1, 0.1);
      }
    }
    for (Index j = opts.content_len; j < N; ++j) {
      for (Index r = 0; r < d; ++r) x(r, j) = rng.uniform01();
    }
    SequenceDataset& part = s < train_count
                                ? out.train
                                : (s < train_count + opts.valid_count
                                       ? out.valid
                                       : out.test);
    part.inputs.push_back(std::move(x));
    part.labels.push_back(label);
  }
  out.train.validate();
  if (opts.valid_count > 0) out.valid.validate();
  if (opts.test_count > 0) out.test.validate();
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void save_csv_sequences(const SequenceDataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv_sequences: cannot open " + path);

  const Index d = data.d();
  out << "seq_id,step";
  for (Index i = 1; i <= d; ++i) out << ",x_" << i;
  if (data.classification()) {
    out << ",label";
  } else {
    for (Index i = 1; i <= data.targets.front().rows(); ++i) out << ",y_" << i;
  }
  out << "\n";

  char buf[32];
  for (Index s = 0; s < data.size(); ++s) {
    const Mat& x = data.inputs[s];
    for (Index j = 0; j < x.cols(); ++j) {
      out << s + 1 << ',' << j + 1;
      for (Index i = 0; i < d; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
        out << ',' << buf;
      }
      if (data.classification()) {
        out << ',' << data.labels[s];
      } else {
        const Mat& t = data.targets[s];
        for (Index i = 0; i < t.rows(); ++i) {
          std::snprintf(buf, sizeof buf, "%.17g", t(i, j));
          out << ',' << buf;
        }
      }
      out << "\n";
    }
  }
  if (!out.good()) {
    throw std::runtime_error("save_csv_sequences: write failed for " + path);
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

[[noreturn]] void line_error(long line_no, const std::string& what) {
  throw std::runtime_error("load_csv_sequences: line " +
                           std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, long line_no) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    line_error(line_no, "not a number: '" + s + "'");
  }
  if (pos != s.size()) line_error(line_no, "trailing junk in '" + s + "'");
  return v;
}

long parse_long(const std::string& s, long line_no) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    line_error(line_no, "not an integer: '" + s + "'");
  }
  if (pos != s.size()) line_error(line_no, "trailing junk in '" + s + "'");
  return v;
}

}  // namespace

SequenceDataset load_csv_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_sequences: cannot open " + path);

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_csv_sequences: " + path + " is empty");
  }
  ++line_no;

  const std::vector<std::string> header = split_line(line);
  if (header.size() < 3 || header[0] != "seq_id" || header[1] != "step") {
    line_error(line_no, "header must start with seq_id,step,x_1,...");
  }
  Index d = 0;
  std::size_t col = 2;
  while (col < header.size() &&
         header[col] == "x_" + std::to_string(d + 1)) {
    ++d;
    ++col;
  }
  if (d == 0) line_error(line_no, "no x_1 input column");
  bool classification = false;
  Index out_dim = 0;
  if (col < header.size() && header[col] == "label") {
    classification = true;
    ++col;
  } else {
    while (col < header.size() &&
           header[col] == "y_" + std::to_string(out_dim + 1)) {
      ++out_dim;
      ++col;
    }
    if (out_dim == 0) line_error(line_no, "expected label or y_1 after inputs");
  }
  if (col != header.size()) line_error(line_no, "unrecognized trailing columns");
  const std::size_t want = 2 + static_cast<std::size_t>(d) +
                           (classification ? 1 : static_cast<std::size_t>(out_dim));

  SequenceDataset ds;
  std::vector<Vec> xs;       // columns of the current sequence
  std::vector<Vec> ts;
  long cur_seq = 0;
  int cur_label = -1;

  auto flush = [&](long line_for_error) {
    if (xs.empty()) return;
    Mat x(d, static_cast<Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) x.col(static_cast<Index>(j)) = xs[j];
    ds.inputs.push_back(std::move(x));
    if (classification) {
      ds.labels.push_back(cur_label);
    } else {
      Mat t(out_dim, static_cast<Index>(ts.size()));
      for (std::size_t j = 0; j < ts.size(); ++j) t.col(static_cast<Index>(j)) = ts[j];
      ds.targets.push_back(std::move(t));
    }
    if (ds.inputs.size() > 1 &&
        ds.inputs.back().cols() != ds.inputs.front().cols()) {
      line_error(line_for_error, "sequence " + std::to_string(cur_seq) +
                                     " has a different length");
    }
    xs.clear();
    ts.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line);
    if (f.size() != want) {
      line_error(line_no, "expected " + std::to_string(want) + " fields, got " +
                              std::to_string(f.size()));
    }
    const long seq = parse_long(f[0], line_no);
    const long step = parse_long(f[1], line_no);
    if (seq != cur_seq) {
      if (seq != cur_seq + 1) line_error(line_no, "seq_id must count up by 1");
      flush(line_no);
      cur_seq = seq;
      cur_label = -1;
    }
    if (step != static_cast<long>(xs.size()) + 1) {
      line_error(line_no, "step must count up from 1 within a sequence");
    }
    Vec x(d);
    for (Index i = 0; i < d; ++i) x[i] = parse_double(f[2 + i], line_no);
    xs.push_back(std::move(x));
    if (classification) {
      const long label = parse_long(f[2 + d], line_no);
      if (cur_label == -1) {
        cur_label = static_cast<int>(label);
      } else if (cur_label != label) {
        line_error(line_no, "label changed within a sequence");
      }
    } else {
      Vec t(out_dim);
      for (Index i = 0; i < out_dim; ++i) {
        t[i] = parse_double(f[2 + d + i], line_no);
      }
      ts.push_back(std::move(t));
    }
  }
  flush(line_no);
  if (ds.inputs.empty()) {
    throw std::runtime_error("load_csv_sequences: " + path + " has no data rows");
  }
  ds.validate();
  return ds;
}

}  // namespace unicornn
