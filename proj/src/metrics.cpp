#include "unicornn/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace unicornn {

namespace {

constexpr const char* kHeader = "epoch,split,metric,value,wall_time_s";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool file_has_content(const std::string& path) {
  std::ifstream probe(path);
  std::string first;
  return probe && std::getline(probe, first) && !first.empty();
}

}  // namespace

void write_metrics(const std::vector<EpochMetrics>& history,
                   const std::string& path, const std::string& metric_name) {
  require(!history.empty(), "write_metrics: empty history");
  require(metric_name.find(',') == std::string::npos,
          "write_metrics: metric name must not contain commas");

  const bool fresh = !file_has_content(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("write_metrics: cannot open " + path);
  if (fresh) out << kHeader << '\n';
  for (const EpochMetrics& e : history) {
    out << e.epoch << ",train,loss," << fmt(e.train_loss) << ','
        << fmt(e.wall_time_s) << '\n';
    out << e.epoch << ",valid," << metric_name << ',' << fmt(e.valid_metric)
        << ',' << fmt(e.wall_time_s) << '\n';
    out << e.epoch << ",train,lr," << fmt(e.lr) << ',' << fmt(e.wall_time_s)
        << '\n';
  }
  if (!out.good()) throw std::runtime_error("write_metrics: write failed");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics: cannot open " + path);
  std::string line;
  long line_no = 0;
  auto bad = [&](const std::string& what) -> std::runtime_error {
    return std::runtime_error("read_metrics: line " + std::to_string(line_no) +
                              ": " + what);
  };
  if (!std::getline(in, line) || line != kHeader) {
    ++line_no;
    throw bad("missing header '" + std::string(kHeader) + "'");
  }
  ++line_no;

  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    MetricsRow row;
    try {
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("epoch");
      row.epoch = std::stoi(field);
      if (!std::getline(ls, row.split, ',')) throw std::invalid_argument("split");
      if (!std::getline(ls, row.metric, ',')) throw std::invalid_argument("metric");
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("value");
      row.value = std::stod(field);
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("wall_time");
      row.wall_time_s = std::stod(field);
    } catch (const std::exception& e) {
      throw bad(std::string("malformed row (") + e.what() + ")");
    }
    if (std::getline(ls, field, ',')) throw bad("extra fields");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace unicornn
