#include "flowcast/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "flowcast/errors.hpp"

#include <json.hpp>

namespace flowcast {

void EvalAccumulator::add(const Tensor& pred, const Tensor& truth,
                          const std::vector<std::uint8_t>& truth_missing) {
  if (!pred.same_shape(truth)) {
    throw std::invalid_argument("evaluate: prediction " + pred.shape_str() +
                                " vs truth " + truth.shape_str());
  }
  if (static_cast<long>(truth_missing.size()) != truth.size()) {
    throw std::invalid_argument("evaluate: missing mask size mismatch");
  }
  if (pred.rank() < 2) throw std::invalid_argument("evaluate: rank must be >= 2");
  const long horizons = pred.dim(0);
  const long channels = pred.dim(pred.rank() - 1);
  if (cells_.empty()) {
    horizons_ = horizons;
    channels_ = channels;
    cells_.assign(static_cast<size_t>(horizons * channels), Cell{});
  } else if (horizons != horizons_ || channels != channels_) {
    throw std::invalid_argument("evaluate: inconsistent horizon/channel layout across samples");
  }
  const long per_horizon = pred.size() / horizons;
  for (long flat = 0; flat < pred.size(); ++flat) {
    if (truth_missing[static_cast<size_t>(flat)]) continue;
    const double t = truth[flat];
    if (opts_.flow_filter_threshold >= 0.0 && t < opts_.flow_filter_threshold) continue;
    const long h = flat / per_horizon;
    const long c = flat % channels;
    Cell& cell = cells_[static_cast<size_t>(h * channels_ + c)];
    const double e = pred[flat] - t;
    cell.abs_sum += std::fabs(e);
    cell.sq_sum += e * e;
    cell.count += 1;
    if (t != 0.0) {
      cell.ape_sum += std::fabs(e) / std::fabs(t);
      cell.mape_count += 1;
    }
  }
}

EvalReport EvalAccumulator::finalize() const {
  EvalReport report;
  report.horizons = horizons_;
  report.channels = channels_;
  Cell total;
  for (const auto& cell : cells_) {
    MetricCell m;
    m.count = cell.count;
    m.mape_count = cell.mape_count;
    if (cell.count > 0) {
      m.mae = cell.abs_sum / static_cast<double>(cell.count);
      m.rmse = std::sqrt(cell.sq_sum / static_cast<double>(cell.count));
    }
    if (cell.mape_count > 0) {
      m.mape_percent = 100.0 * cell.ape_sum / static_cast<double>(cell.mape_count);
    }
    report.per_horizon_channel.push_back(m);
    total.abs_sum += cell.abs_sum;
    total.sq_sum += cell.sq_sum;
    total.ape_sum += cell.ape_sum;
    total.count += cell.count;
    total.mape_count += cell.mape_count;
  }
  if (total.count == 0) throw DataError("evaluate: no points retained");
  report.overall.count = total.count;
  report.overall.mape_count = total.mape_count;
  report.overall.mae = total.abs_sum / static_cast<double>(total.count);
  report.overall.rmse = std::sqrt(total.sq_sum / static_cast<double>(total.count));
  if (total.mape_count > 0) {
    report.overall.mape_percent = 100.0 * total.ape_sum / static_cast<double>(total.mape_count);
  }
  return report;
}

EvalReport evaluate(const Tensor& pred, const Tensor& truth,
                    const std::vector<std::uint8_t>& truth_missing, const EvalOptions& opts) {
  EvalAccumulator acc(opts);
  acc.add(pred, truth, truth_missing);
  return acc.finalize();
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["overall"] = {{"mae", report.overall.mae},
                  {"mape_percent", report.overall.mape_percent},
                  {"rmse", report.overall.rmse},
                  {"count", report.overall.count},
                  {"mape_count", report.overall.mape_count}};
  nlohmann::json rows = nlohmann::json::array();
  for (long h = 0; h < report.horizons; ++h) {
    for (long c = 0; c < report.channels; ++c) {
      const MetricCell& m = report.at(h, c);
      rows.push_back({{"horizon", h + 1},
                      {"channel", c},
                      {"mae", m.mae},
                      {"mape_percent", m.mape_percent},
                      {"rmse", m.rmse},
                      {"count", m.count},
                      {"mape_count", m.mape_count}});
    }
  }
  j["per_horizon_channel"] = rows;
  return j.dump(2);
}

std::string eval_report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "horizon,channel,mae,mape_percent,rmse,count,mape_count\n";
  for (long h = 0; h < report.horizons; ++h) {
    for (long c = 0; c < report.channels; ++c) {
      const MetricCell& m = report.at(h, c);
      os << (h + 1) << "," << c << "," << m.mae << "," << m.mape_percent << "," << m.rmse << ","
         << m.count << "," << m.mape_count << "\n";
    }
  }
  const MetricCell& o = report.overall;
  os << "all,all," << o.mae << "," << o.mape_percent << "," << o.rmse << "," << o.count << ","
     << o.mape_count << "\n";
  return os.str();
}

}  // namespace flowcast
