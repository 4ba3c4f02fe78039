#include "unicornn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace unicornn {

namespace {

constexpr const char* kVersion = "unicornn-ckpt-1";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_values(std::ofstream& out, const std::string& name,
                  const double* data, Index size) {
  out << name << ' ' << size;
  for (Index i = 0; i < size; ++i) out << ' ' << fmt(data[i]);
  out << '\n';
}

// Matrices are flattened row-major in the document regardless of the in-memory
// layout.
void write_matrix(std::ofstream& out, const std::string& name, const Mat& M) {
  out << name << ' ' << M.size();
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) out << ' ' << fmt(M(i, j));
  }
  out << '\n';
}

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("checkpoint: " + what);
}

// Token-stream reader over the whole document; every getter names the field
// it was trying to read so truncation and typos surface precisely.
struct Reader {
  std::istringstream in;

  explicit Reader(std::string text) : in(std::move(text)) {}

  std::string word(const std::string& field) {
    std::string w;
    if (!(in >> w)) fail(field + ": unexpected end of file");
    return w;
  }

  void expect(const std::string& token) {
    const std::string w = word("'" + token + "'");
    if (w != token) fail("expected '" + token + "', found '" + w + "'");
  }

  double number(const std::string& field) {
    const std::string w = word(field);
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(w, &pos);
    } catch (const std::exception&) {
      fail(field + ": not a number: '" + w + "'");
    }
    if (pos != w.size()) fail(field + ": trailing junk in '" + w + "'");
    return v;
  }

  long integer(const std::string& field) {
    const std::string w = word(field);
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(w, &pos);
    } catch (const std::exception&) {
      fail(field + ": not an integer: '" + w + "'");
    }
    if (pos != w.size()) fail(field + ": trailing junk in '" + w + "'");
    return v;
  }

  std::uint64_t unsigned_integer(const std::string& field) {
    const std::string w = word(field);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(w, &pos);
    } catch (const std::exception&) {
      fail(field + ": not an unsigned integer: '" + w + "'");
    }
    if (pos != w.size()) fail(field + ": trailing junk in '" + w + "'");
    return v;
  }

  void values(const std::string& name, double* data, Index size) {
    expect(name);
    const long stored = integer(name + " count");
    if (stored != size) {
      fail(name + ": expected " + std::to_string(size) + " values, file has " +
           std::to_string(stored));
    }
    for (Index i = 0; i < size; ++i) {
      data[i] = number(name + "[" + std::to_string(i) + "]");
    }
  }

  void matrix(const std::string& name, Mat& M) {
    expect(name);
    const long stored = integer(name + " count");
    if (stored != M.size()) {
      fail(name + ": expected " + std::to_string(M.size()) +
           " values, file has " + std::to_string(stored));
    }
    for (Index i = 0; i < M.rows(); ++i) {
      for (Index j = 0; j < M.cols(); ++j) {
        M(i, j) = number(name + "[" + std::to_string(i * M.cols() + j) + "]");
      }
    }
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.model.validate();
  const ModelConfig& cfg = ckpt.model.config;
  if (ckpt.meta.task.find_first_of(" \t\n") != std::string::npos) {
    fail("meta task name must not contain whitespace");
  }

  std::ofstream out(path);
  if (!out) fail("cannot open " + path + " for writing");
  out << kVersion << '\n';
  out << "config L " << cfg.L << " m " << cfg.m << " d " << cfg.d
      << " out_dim " << cfg.out_dim << " alpha " << fmt(cfg.alpha) << " skip "
      << cfg.skip << " dropout " << fmt(cfg.dropout) << " readout "
      << (cfg.readout == ReadoutMode::per_step ? "per_step" : "final_step")
      << '\n';
  out << "dt " << cfg.dt.size();
  for (double v : cfg.dt) out << ' ' << fmt(v);
  out << '\n';
  out << "meta task " << ckpt.meta.task << " epoch " << ckpt.meta.epoch
      << " metric " << fmt(ckpt.meta.metric) << " seed " << ckpt.meta.seed
      << '\n';

  for (int ell = 1; ell <= cfg.L; ++ell) {
    const LayerParams& p = ckpt.model.layers[ell - 1];
    const std::string tag = "layer_" + std::to_string(ell) + "_";
    write_values(out, tag + "w", p.w.data(), p.w.size());
    write_matrix(out, tag + "V", p.V);
    write_values(out, tag + "b", p.b.data(), p.b.size());
    write_values(out, tag + "c", p.c.data(), p.c.size());
    if (p.lambda) {
      write_matrix(out, tag + "lambda", *p.lambda);
    }
  }
  write_matrix(out, "readout_W", ckpt.model.readout_W);
  write_values(out, "readout_b", ckpt.model.readout_b.data(),
               ckpt.model.readout_b.size());

  if (ckpt.optim) {
    const OptimState& o = *ckpt.optim;
    if (o.m_buf.size() != o.v_buf.size()) {
      fail("optimizer moment buffers disagree in tensor count");
    }
    out << "optim adam lr " << fmt(o.lr) << " beta1 " << fmt(o.beta1)
        << " beta2 " << fmt(o.beta2) << " eps " << fmt(o.eps) << " step "
        << o.step << " tensors " << o.m_buf.size() << '\n';
    for (std::size_t t = 0; t < o.m_buf.size(); ++t) {
      write_values(out, "optim_m_" + std::to_string(t), o.m_buf[t].data(),
                   o.m_buf[t].size());
      write_values(out, "optim_v_" + std::to_string(t), o.v_buf[t].data(),
                   o.v_buf[t].size());
    }
  } else {
    out << "optim none\n";
  }
  out << "end\n";
  if (!out.good()) fail("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  Reader r(buffer.str());

  const std::string version = r.word("version tag");
  if (version != kVersion) {
    fail("unsupported version '" + version + "' (this build reads " +
         kVersion + ")");
  }

  Checkpoint ckpt;
  ModelConfig& cfg = ckpt.model.config;
  r.expect("config");
  r.expect("L");
  cfg.L = static_cast<int>(r.integer("config L"));
  r.expect("m");
  cfg.m = static_cast<int>(r.integer("config m"));
  r.expect("d");
  cfg.d = static_cast<int>(r.integer("config d"));
  r.expect("out_dim");
  cfg.out_dim = static_cast<int>(r.integer("config out_dim"));
  r.expect("alpha");
  cfg.alpha = r.number("config alpha");
  r.expect("skip");
  cfg.skip = static_cast<int>(r.integer("config skip"));
  r.expect("dropout");
  cfg.dropout = r.number("config dropout");
  r.expect("readout");
  const std::string mode = r.word("config readout");
  if (mode == "per_step") {
    cfg.readout = ReadoutMode::per_step;
  } else if (mode == "final_step") {
    cfg.readout = ReadoutMode::final_step;
  } else {
    fail("config readout: unknown mode '" + mode + "'");
  }
  r.expect("dt");
  const long ndt = r.integer("dt count");
  if (ndt != cfg.L) {
    fail("dt: expected " + std::to_string(cfg.L) + " values, file has " +
         std::to_string(ndt));
  }
  cfg.dt.resize(static_cast<std::size_t>(ndt));
  for (long i = 0; i < ndt; ++i) {
    cfg.dt[static_cast<std::size_t>(i)] = r.number("dt[" + std::to_string(i) + "]");
  }
  r.expect("meta");
  r.expect("task");
  ckpt.meta.task = r.word("meta task");
  r.expect("epoch");
  ckpt.meta.epoch = static_cast<int>(r.integer("meta epoch"));
  r.expect("metric");
  ckpt.meta.metric = r.number("meta metric");
  r.expect("seed");
  ckpt.meta.seed = r.unsigned_integer("meta seed");

  for (int ell = 1; ell <= cfg.L; ++ell) {
    LayerParams p;
    const std::string tag = "layer_" + std::to_string(ell) + "_";
    const Index d_in = cfg.layer_in_dim(ell);
    p.w = Arr(cfg.m);
    p.V = Mat(cfg.m, d_in);
    p.b = Arr(cfg.m);
    p.c = Arr(cfg.m);
    r.values(tag + "w", p.w.data(), p.w.size());
    r.matrix(tag + "V", p.V);
    r.values(tag + "b", p.b.data(), p.b.size());
    r.values(tag + "c", p.c.data(), p.c.size());
    if (cfg.has_skip(ell)) {
      p.lambda = Mat(cfg.m, cfg.m);
      r.matrix(tag + "lambda", *p.lambda);
    }
    ckpt.model.layers.push_back(std::move(p));
  }
  ckpt.model.readout_W = Mat(cfg.out_dim, cfg.m);
  ckpt.model.readout_b = Vec(cfg.out_dim);
  r.matrix("readout_W", ckpt.model.readout_W);
  r.values("readout_b", ckpt.model.readout_b.data(),
           ckpt.model.readout_b.size());

  r.expect("optim");
  const std::string kind = r.word("optim kind");
  if (kind == "adam") {
    OptimState o;
    r.expect("lr");
    o.lr = r.number("optim lr");
    r.expect("beta1");
    o.beta1 = r.number("optim beta1");
    r.expect("beta2");
    o.beta2 = r.number("optim beta2");
    r.expect("eps");
    o.eps = r.number("optim eps");
    r.expect("step");
    o.step = r.integer("optim step");
    r.expect("tensors");
    const long tensors = r.integer("optim tensors");
    if (tensors < 0) fail("optim tensors: negative count");
    for (long t = 0; t < tensors; ++t) {
      const std::string mname = "optim_m_" + std::to_string(t);
      const std::string vname = "optim_v_" + std::to_string(t);
      r.expect(mname);
      const long msize = r.integer(mname + " count");
      Arr mbuf(msize);
      for (long i = 0; i < msize; ++i) {
        mbuf[i] = r.number(mname + "[" + std::to_string(i) + "]");
      }
      r.expect(vname);
      const long vsize = r.integer(vname + " count");
      if (vsize != msize) fail(vname + ": moment sizes disagree");
      Arr vbuf(vsize);
      for (long i = 0; i < vsize; ++i) {
        vbuf[i] = r.number(vname + "[" + std::to_string(i) + "]");
      }
      o.m_buf.push_back(std::move(mbuf));
      o.v_buf.push_back(std::move(vbuf));
    }
    ckpt.optim = std::move(o);
  } else if (kind != "none") {
    fail("optim kind: unknown '" + kind + "'");
  }
  r.expect("end");
  ckpt.model.validate();
  return ckpt;
}

}  // namespace unicornn
