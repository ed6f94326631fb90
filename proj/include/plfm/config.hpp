#pragma once

#include <filesystem>
#include <string>

namespace plfm::config {

/// One declarative document holding every tunable. Defaults are the
/// published training settings; unknown keys are rejected at parse time.
struct RunConfig {
  // data
  std::string data_root = "dataset";
  int size = 256;
  int seq_len = 3;      // temporal window n
  int classes = 256;    // head intensity classes
  uint64_t seed = 0;

  // synthetic scenes
  int rois = 16;
  int steps = 4;
  double coverage = 0.65;
  double thickness = 0.8;
  double drift = 0.15;
  double brightness_drift = 0.02;
  bool cloud_all = false;
  int looks = 1;

  // split search
  int split_iterations = 2000;
  int split_n = 150;
  int split_bins = 20;
  double val_fraction = 0.2;
  double test_fraction = 0.1;
  bool split_normalized = false;  // unit-mass histogram variant, never default

  // temporal branch
  int convlstm_layers = 3;
  int convlstm_filters = 32;
  int convlstm_kernel = 3;
  bool convlstm_peephole = true;
  bool convlstm_pooling = false;
  double convlstm_lr = 1e-2;
  int convlstm_batch = 16;
  double huber_delta = 1.0;
  int convlstm_max_epochs = 200;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  int early_patience = 10;

  // translation branch
  int cgan_depth = 5;
  int cgan_filters = 64;
  double cgan_dropout = 0.5;
  int patch_target = 70;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  double lambda_l1 = 100.0;
  double cgan_lr = 2e-4;
  int cgan_batch = 32;
  int cgan_steps = 2000;
  bool adversarial = true;
  double adam_beta1_gan = 0.5;

  // head branch
  int head_depth = 2;
  int head_filters = 32;
  double head_lr = 2e-4;
  int head_batch = 16;
  int head_epochs = 40;

  // evaluation
  bool csc = true;
  int csc_radius = 2;
  bool degrees = false;
  double white_threshold = 0.85;
};

/// Parse a config document over the defaults. Throws DataError on unknown
/// sections/keys or malformed values.
RunConfig load_config(const std::filesystem::path& path);
RunConfig defaults();

/// Canonical serialization (every key, current values).
std::string dump_config(const RunConfig& cfg);

}  // namespace plfm::config
