#pragma once

#include <string>
#include <vector>

#include "unicornn/train.hpp"

namespace unicornn {

struct MetricsRow {
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  double wall_time_s = 0.0;
};

// Appends "epoch,split,metric,value,wall_time_s" rows, one per recorded
// quantity: (train, loss), (valid, <metric_name>), (train, lr). The header is
// written only when the file is new or empty, so repeated calls append
// cleanly. Values carry 17 significant digits.
void write_metrics(const std::vector<EpochMetrics>& history,
                   const std::string& path,
                   const std::string& metric_name = "metric");

// Parses a metrics file back into rows; raises std::runtime_error with the
// line number on malformed content.
std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace unicornn
