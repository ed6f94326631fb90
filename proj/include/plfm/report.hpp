#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plfm/metrics.hpp"

namespace plfm::report {

/// Cloud-coverage buckets used for grouped evaluation summaries.
inline const std::vector<std::pair<double, double>>& coverage_buckets() {
  static const std::vector<std::pair<double, double>> b = {
      {0.00, 0.20}, {0.20, 0.50}, {0.50, 0.80}, {0.80, 1.00}};
  return b;
}

std::string bucket_label(int i);          // "<=20%", "20-50%", "50-80%", "80-100%"
int bucket_of(double coverage);           // index into coverage_buckets()

struct BucketRow {
  int bucket;
  int count = 0;
  metrics::MetricsReport mean;
};

/// Mean metrics per populated bucket, ordered by bucket index.
std::vector<BucketRow> bucket_means(
    const std::vector<std::pair<double, metrics::MetricsReport>>& rows);

std::string bucket_table_tsv(const std::vector<BucketRow>& rows);

/// Polyline chart of one or more series over their index. Output bytes are a
/// pure function of the data.
void plot_series(const std::filesystem::path& path, const std::vector<std::vector<double>>& series,
                 int width = 640, int height = 400);

/// Equal-width histogram of the sample.
void plot_histogram(const std::filesystem::path& path, const std::vector<double>& values,
                    int bins = 24, int width = 640, int height = 400);

struct ReportInputs {
  std::filesystem::path metrics_tsv;
  std::vector<std::filesystem::path> train_logs;  // optional loss-curve sources
};

/// Emits bucket tables and distribution/loss plots into out_dir. Returns the
/// number of plot files written; an empty metrics table yields an empty
/// report and no plots.
int write_report(const ReportInputs& inputs, const std::filesystem::path& out_dir);

}  // namespace plfm::report
