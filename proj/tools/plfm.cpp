// Command-line surface for the cloud-removal pipeline: synthetic dataset
// generation, split search, per-branch training, end-to-end inference, batch
// evaluation and report emission.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 incompatibility.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "plfm/cgan.hpp"
#include "plfm/config.hpp"
#include "plfm/convlstm.hpp"
#include "plfm/dataset.hpp"
#include "plfm/errors.hpp"
#include "plfm/head.hpp"
#include "plfm/layout.hpp"
#include "plfm/metrics.hpp"
#include "plfm/report.hpp"
#include "plfm/rng.hpp"
#include "plfm/tensor_io.hpp"

namespace fs = std::filesystem;
using plfm::Tensor;
using plfm::config::RunConfig;

namespace {

struct CommonOpts {
  std::string config_path;
  CLI::Option* config_opt = nullptr;
};

void add_config_option(CLI::App* cmd, CommonOpts& common) {
  common.config_opt = cmd->add_option("--config", common.config_path, "Config document");
}

RunConfig effective_config(const CommonOpts& common) {
  if (common.config_opt && common.config_opt->count() > 0)
    return plfm::config::load_config(common.config_path);
  return plfm::config::defaults();
}

std::string zero_pad(int v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Sample assembly shared by the training commands

std::vector<std::string> rois_with_label(const plfm::dataset::DatasetIndex& index,
                                         const std::string& label) {
  std::vector<std::string> out;
  for (const auto& [roi, set] : index.split_labels)
    if (set == label) out.push_back(roi);
  std::sort(out.begin(), out.end());
  return out;
}

plfm::convlstm::Sample to_forecast_sample(const plfm::dataset::ROISample& roi) {
  plfm::convlstm::Sample s;
  const int t = static_cast<int>(roi.input_seq.frames.size());
  const int h = roi.input_seq.frames[0].height(), w = roi.input_seq.frames[0].width();
  s.seq = Tensor({t, 3, h, w});
  for (int k = 0; k < t; ++k) {
    const Tensor chw = plfm::hwc_to_chw(roi.input_seq.frames[static_cast<size_t>(k)].values);
    std::copy(chw.data(), chw.data() + chw.numel(), s.seq.data() + static_cast<int64_t>(k) * chw.numel());
  }
  s.target = plfm::hwc_to_chw(roi.target.values);
  return s;
}

void write_convlstm_log(const fs::path& path, const plfm::convlstm::TrainResult& result,
                        uint64_t seed) {
  std::ofstream f(path);
  f << "# seed: " << seed << "\n";
  f << "epoch\ttrain_loss\tval_loss\tlr\n";
  char buf[160];
  for (const auto& row : result.history) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\n", row.epoch, row.train_loss,
                  row.val_loss, row.lr);
    f << buf;
  }
}

// ---------------------------------------------------------------------------
// dataset subcommands

int cmd_dataset_synth(const RunConfig& cfg, const std::string& out) {
  plfm::dataset::SceneCfg scene;
  scene.size = cfg.size;
  scene.steps = cfg.steps;
  scene.coverage = cfg.coverage;
  scene.thickness = cfg.thickness;
  scene.drift = cfg.drift;
  scene.brightness_drift = cfg.brightness_drift;
  scene.cloud_all = cfg.cloud_all;
  scene.looks = cfg.looks;

  const fs::path root(out);
  for (int r = 0; r < cfg.rois; ++r) {
    plfm::dataset::ROISeries series =
        plfm::dataset::synth_scene(plfm::derive_seed(cfg.seed, "synth.roi", r), scene);
    series.roi_id = "roi" + zero_pad(r, 4);
    plfm::dataset::write_series(root, series);
  }
  plfm::dataset::write_index(plfm::dataset::build_index(root), root);
  std::printf("wrote %d rois (%dx%d, %d steps) under %s\n", cfg.rois, cfg.size, cfg.size,
              cfg.steps, out.c_str());
  return 0;
}

int cmd_dataset_index(const std::string& root) {
  const auto index = plfm::dataset::build_index(root);
  plfm::dataset::write_index(index, root);
  std::printf("indexed %zu entries\n", index.entries.size());
  return 0;
}

int cmd_dataset_split(const RunConfig& cfg, const std::string& root) {
  const auto index = plfm::dataset::load_index(root);
  plfm::dataset::SplitConfig scfg;
  scfg.iterations = cfg.split_iterations;
  scfg.n_images = cfg.split_n;
  scfg.bins = cfg.split_bins;
  scfg.val_fraction = cfg.val_fraction;
  scfg.test_fraction = cfg.test_fraction;
  scfg.normalized = cfg.split_normalized;
  const auto split = plfm::dataset::split_dataset(index, scfg, cfg.seed);

  plfm::dataset::write_split(fs::path(root) / "split.tsv", split);
  std::ofstream trace(fs::path(root) / "trace.tsv");
  trace << "iteration\tdissimilarity\n";
  for (size_t i = 0; i < split.trace.size(); ++i)
    trace << i << "\t" << std::setprecision(12) << split.trace[i] << "\n";

  std::printf("dissimilarity %.12g\n", split.dissimilarity_value);
  std::printf("train %zu val %zu test %zu rois\n", split.train_ids.size(), split.val_ids.size(),
              split.test_ids.size());
  return 0;
}

// ---------------------------------------------------------------------------
// train subcommands

int cmd_train_convlstm(const RunConfig& cfg, const std::string& root, const std::string& out,
                       bool resume) {
  const auto index = plfm::dataset::load_index(root);
  if (index.split_labels.empty())
    throw plfm::DataError("train: no split.tsv under " + root + " (run `dataset split` first)");

  std::vector<plfm::convlstm::Sample> train_set, val_set;
  for (const auto& roi : rois_with_label(index, "train"))
    train_set.push_back(to_forecast_sample(plfm::dataset::load_roi(index, roi)));
  for (const auto& roi : rois_with_label(index, "val"))
    val_set.push_back(to_forecast_sample(plfm::dataset::load_roi(index, roi)));
  if (train_set.empty()) throw plfm::DataError("train: empty training split");

  plfm::convlstm::ModelConfig mcfg;
  mcfg.hidden.assign(static_cast<size_t>(cfg.convlstm_layers), cfg.convlstm_filters);
  mcfg.kernel = cfg.convlstm_kernel;
  mcfg.peephole = cfg.convlstm_peephole;
  mcfg.pooling = cfg.convlstm_pooling;
  mcfg.height = train_set[0].seq.dim(2);
  mcfg.width = train_set[0].seq.dim(3);
  mcfg.seq_len = train_set[0].seq.dim(0);

  const fs::path ckpt = fs::path(out) / "convlstm.bin";
  plfm::convlstm::Model model =
      resume && fs::exists(ckpt)
          ? plfm::convlstm::Model::from_archive(plfm::nn::load_archive(ckpt))
          : plfm::convlstm::Model(mcfg, plfm::derive_seed(cfg.seed, "convlstm.model"));

  plfm::convlstm::TrainConfig tcfg;
  tcfg.lr = cfg.convlstm_lr;
  tcfg.batch_size = cfg.convlstm_batch;
  tcfg.max_epochs = cfg.convlstm_max_epochs;
  tcfg.plateau_factor = cfg.plateau_factor;
  tcfg.plateau_patience = cfg.plateau_patience;
  tcfg.early_patience = cfg.early_patience;
  tcfg.delta = cfg.huber_delta;
  tcfg.seed = cfg.seed;

  const auto result = plfm::convlstm::train(model, train_set, val_set, tcfg);

  fs::create_directories(out);
  plfm::nn::Archive archive = model.to_archive();
  archive.meta["seed"] = std::to_string(cfg.seed);
  plfm::nn::save_archive(ckpt, archive);
  write_convlstm_log(fs::path(out) / "convlstm_log.tsv", result, cfg.seed);
  std::printf("convlstm: best val %.9g at epoch %d (%zu epochs run)\n", result.best_val,
              result.best_epoch, result.history.size());
  return 0;
}

int cmd_train_cgan(const RunConfig& cfg, const std::string& root, const std::string& out,
                   bool resume) {
  const auto index = plfm::dataset::load_index(root);
  if (index.split_labels.empty())
    throw plfm::DataError("train: no split.tsv under " + root + " (run `dataset split` first)");

  std::vector<plfm::cgan::Pair> pairs;
  int height = 0, width = 0;
  for (const auto& roi : rois_with_label(index, "train")) {
    const auto sample = plfm::dataset::load_roi(index, roi);
    for (const auto& [sar, optical] : sample.sar_optical_pairs) {
      if (sar.values.empty()) continue;
      plfm::cgan::Pair p;
      p.sar = plfm::hwc_to_chw(sar.values);
      p.optical = plfm::hwc_to_chw(optical.values);
      height = optical.height();
      width = optical.width();
      pairs.push_back(std::move(p));
    }
  }
  if (pairs.empty()) throw plfm::DataError("train: no (SAR, optical) pairs in the training split");

  plfm::cgan::GeneratorConfig gcfg;
  gcfg.depth = cfg.cgan_depth;
  gcfg.base_filters = cfg.cgan_filters;
  gcfg.dropout = cfg.cgan_dropout;
  plfm::cgan::DiscriminatorConfig dcfg;
  dcfg.patch_target = cfg.patch_target;
  dcfg.base_filters = std::max(4, cfg.cgan_filters / 2);
  dcfg.gamma1 = cfg.gamma1;
  dcfg.gamma2 = cfg.gamma2;
  dcfg.lambda_l1 = cfg.lambda_l1;

  const fs::path gpath = fs::path(out) / "cgan_g.bin";
  plfm::cgan::UNetGenerator g =
      resume && fs::exists(gpath)
          ? plfm::cgan::UNetGenerator::from_archive(plfm::nn::load_archive(gpath))
          : plfm::cgan::UNetGenerator(gcfg, height, width,
                                      plfm::derive_seed(cfg.seed, "cgan.model"));
  plfm::cgan::PatchDiscriminator d1(dcfg, 4, height, width,
                                    plfm::derive_seed(cfg.seed, "cgan.d1"), "d1");
  plfm::cgan::PatchDiscriminator d2(dcfg, 4, height, width,
                                    plfm::derive_seed(cfg.seed, "cgan.d2"), "d2");

  plfm::cgan::TrainConfig tcfg;
  tcfg.lr = cfg.cgan_lr;
  tcfg.beta1 = cfg.adam_beta1_gan;
  tcfg.batch_size = cfg.cgan_batch;
  tcfg.steps = cfg.cgan_steps;
  tcfg.looks = cfg.looks;
  tcfg.adversarial = cfg.adversarial;
  tcfg.seed = cfg.seed;

  const auto result = plfm::cgan::train_cgan(g, d1, d2, pairs, dcfg, tcfg);

  fs::create_directories(out);
  plfm::nn::Archive archive = g.to_archive();
  archive.meta["seed"] = std::to_string(cfg.seed);
  plfm::nn::save_archive(gpath, archive);
  std::ofstream log(fs::path(out) / "cgan_log.tsv");
  log << "# seed: " << cfg.seed << "\n";
  log << "step\td1_loss\td2_loss\tg_adv_loss\tg_l1_loss\tg_total\n";
  char buf[200];
  for (const auto& row : result.history) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", row.step,
                  row.losses.d1_loss, row.losses.d2_loss, row.losses.g_adv_loss,
                  row.losses.g_l1_loss, row.losses.g_total);
    log << buf;
  }
  std::printf("cgan: %zu steps, final g_l1 %.9g\n", result.history.size(),
              result.history.empty() ? 0.0 : result.history.back().losses.g_l1_loss);
  return 0;
}

int cmd_train_head(const RunConfig& cfg, const std::string& root, const std::string& out,
                   bool resume) {
  const auto index = plfm::dataset::load_index(root);
  if (index.split_labels.empty())
    throw plfm::DataError("train: no split.tsv under " + root + " (run `dataset split` first)");

  const fs::path fpath = fs::path(out) / "convlstm.bin";
  const fs::path gpath = fs::path(out) / "cgan_g.bin";
  if (!fs::exists(fpath) || !fs::exists(gpath))
    throw plfm::DataError("train: head needs convlstm.bin and cgan_g.bin under " + out);
  auto forecaster = plfm::convlstm::Model::from_archive(plfm::nn::load_archive(fpath));
  auto generator = plfm::cgan::UNetGenerator::from_archive(plfm::nn::load_archive(gpath));

  // embeddings from the frozen branches, produced on the fly
  std::vector<plfm::head::Triple> triples;
  for (const auto& roi : rois_with_label(index, "train")) {
    const auto sample = plfm::dataset::load_roi(index, roi);
    plfm::head::Triple t;
    t.y_hat = plfm::convlstm::convlstm_forward(sample.input_seq, forecaster);
    t.z_hat = plfm::cgan::generator_forward(sample.sar, generator, false);
    t.target = sample.target;
    triples.push_back(std::move(t));
  }
  if (triples.empty()) throw plfm::DataError("train: empty training split");

  plfm::head::HeadConfig hcfg;
  hcfg.classes = cfg.classes;
  hcfg.depth = cfg.head_depth;
  hcfg.base_filters = cfg.head_filters;
  hcfg.batch_size = cfg.head_batch;
  hcfg.lr = cfg.head_lr;
  hcfg.epochs = cfg.head_epochs;
  hcfg.seed = cfg.seed;

  const fs::path hpath = fs::path(out) / "head.bin";
  plfm::head::HeadModel model =
      resume && fs::exists(hpath)
          ? plfm::head::HeadModel::from_archive(plfm::nn::load_archive(hpath))
          : plfm::head::HeadModel(hcfg, triples[0].target.height(), triples[0].target.width(),
                                  plfm::derive_seed(cfg.seed, "head.model"));

  const auto result = plfm::head::train_head(model, triples, hcfg);

  fs::create_directories(out);
  plfm::nn::Archive archive = model.to_archive();
  archive.meta["seed"] = std::to_string(cfg.seed);
  plfm::nn::save_archive(hpath, archive);
  std::ofstream log(fs::path(out) / "head_log.tsv");
  log << "# seed: " << cfg.seed << "\n";
  log << "epoch\tloss\taccuracy\n";
  char buf[120];
  for (const auto& row : result.history) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\n", row.epoch, row.loss, row.accuracy);
    log << buf;
  }
  std::printf("head: final accuracy %.4f over %zu epochs\n", result.history.back().accuracy,
              result.history.size() - 1);
  return 0;
}

// ---------------------------------------------------------------------------
// infer

int cmd_infer(const std::string& roi_dir, const std::string& checkpoints, const std::string& out,
              bool dump_intermediates, bool png) {
  const fs::path ckpt(checkpoints);
  auto forecaster =
      plfm::convlstm::Model::from_archive(plfm::nn::load_archive(ckpt / "convlstm.bin"));
  auto generator =
      plfm::cgan::UNetGenerator::from_archive(plfm::nn::load_archive(ckpt / "cgan_g.bin"));
  auto head_model = plfm::head::HeadModel::from_archive(plfm::nn::load_archive(ckpt / "head.bin"));

  const int n = forecaster.cfg.seq_len;
  plfm::data::TemporalSequence seq;
  for (int t = 0; t < n; ++t) {
    const fs::path frame = fs::path(roi_dir) / ("t" + std::to_string(t)) / "s2.f32";
    seq.frames.push_back(plfm::io::read_optical(frame));
    seq.timestamps.push_back(t);
  }
  const fs::path sar_path = fs::path(roi_dir) / ("t" + std::to_string(n)) / "s1.f32";
  const plfm::data::SARImage sar = plfm::io::read_sar(sar_path);

  plfm::head::PLFMModels models{std::move(forecaster), std::move(generator), std::move(head_model)};
  const plfm::data::OpticalImage prediction = plfm::head::plfm_infer(seq, sar, models);

  plfm::io::Meta meta;
  meta.sensor = "S2";
  meta.extra["convlstm_checkpoint"] = plfm::io::file_hash(ckpt / "convlstm.bin");
  meta.extra["cgan_checkpoint"] = plfm::io::file_hash(ckpt / "cgan_g.bin");
  meta.extra["head_checkpoint"] = plfm::io::file_hash(ckpt / "head.bin");
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  plfm::io::write_optical(out, prediction, meta);
  if (png) {
    fs::path p(out);
    p.replace_extension(".png");
    plfm::io::export_rgb8(p, prediction);
  }

  // the intermediate feature maps are never persisted unless explicitly asked
  if (dump_intermediates) {
    const auto y_hat = plfm::convlstm::convlstm_forward(seq, models.forecaster);
    const auto z_hat = plfm::cgan::generator_forward(sar, models.generator, false);
    fs::path base(out);
    plfm::io::Meta im;
    im.sensor = "S2";
    fs::path yp = base;
    yp.replace_filename(base.stem().string() + "_y_hat.f32");
    fs::path zp = base;
    zp.replace_filename(base.stem().string() + "_z_hat.f32");
    plfm::io::write_optical(yp, y_hat, im);
    plfm::io::write_optical(zp, z_hat, im);
  }
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

double coverage_for(const fs::path& gt_dir, const std::string& stem, double white_threshold) {
  const fs::path mask_path = gt_dir / (stem + ".mask.f32");
  if (fs::exists(mask_path)) {
    const Tensor mask = plfm::io::read_tensor(mask_path);
    double acc = 0;
    for (int64_t i = 0; i < mask.numel(); ++i) acc += mask[i] > 0.5 ? 1.0 : 0.0;
    return acc / static_cast<double>(mask.numel());
  }
  const fs::path cloudy_path = gt_dir / (stem + ".cloudy.f32");
  if (fs::exists(cloudy_path)) {
    // no mask: estimate coverage by counting white pixels in the cloudy frame
    const plfm::data::OpticalImage cloudy = plfm::io::read_optical(cloudy_path);
    int64_t white = 0;
    const int64_t pixels = static_cast<int64_t>(cloudy.height()) * cloudy.width();
    for (int y = 0; y < cloudy.height(); ++y)
      for (int x = 0; x < cloudy.width(); ++x) {
        double mean = 0;
        for (int c = 0; c < cloudy.bands(); ++c) mean += cloudy.values.at(y, x, c);
        white += mean / cloudy.bands() > white_threshold ? 1 : 0;
      }
    return static_cast<double>(white) / static_cast<double>(pixels);
  }
  return 0.0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& out_dir) {
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() != ".f32") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.ends_with(".mask") || stem.ends_with(".cloudy")) continue;
    stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());

  plfm::metrics::EvalConfig ecfg;
  ecfg.csc = cfg.csc && cfg.csc_radius > 0;
  ecfg.radius = cfg.csc_radius;
  ecfg.degrees = cfg.degrees;

  fs::create_directories(out_dir);
  std::ofstream rows(fs::path(out_dir) / "metrics.tsv");
  rows << plfm::metrics::report_tsv_header() << "\n";
  std::ofstream covs(fs::path(out_dir) / "coverage.tsv");
  covs << "image_id\tcoverage\n";

  std::vector<std::pair<double, plfm::metrics::MetricsReport>> with_cov;
  for (const std::string& stem : stems) {
    const fs::path gt_path = fs::path(gt_dir) / (stem + ".f32");
    if (!fs::exists(gt_path))
      throw plfm::DataError("evaluate: unpaired prediction " + stem + " (missing ground truth)");
    const auto pred = plfm::io::read_optical(fs::path(pred_dir) / (stem + ".f32"));
    const auto gt = plfm::io::read_optical(gt_path);
    const auto rep = plfm::metrics::evaluate(pred, gt, ecfg);
    const double cov = coverage_for(gt_dir, stem, cfg.white_threshold);
    rows << plfm::metrics::report_tsv_row(stem, rep) << "\n";
    covs << stem << "\t" << cov << "\n";
    with_cov.emplace_back(cov, rep);
  }
  if (stems.empty()) throw plfm::DataError("evaluate: no .f32 predictions under " + pred_dir);

  const auto buckets = plfm::report::bucket_means(with_cov);
  std::ofstream bt(fs::path(out_dir) / "buckets.tsv");
  bt << plfm::report::bucket_table_tsv(buckets);
  std::printf("evaluated %zu pairs, %zu populated buckets\n", stems.size(), buckets.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixel-level fusion pipeline for SAR/optical cloud removal"};
  app.require_subcommand(1);

  // dataset ------------------------------------------------------------
  CLI::App* ds = app.add_subcommand("dataset", "Generate, index and split datasets");
  ds->require_subcommand(1);

  CommonOpts synth_common;
  std::string synth_out = "dataset";
  CLI::App* synth = ds->add_subcommand("synth", "Generate a synthetic paired corpus");
  add_config_option(synth, synth_common);
  synth->add_option("--out", synth_out, "Output dataset root");
  int synth_rois = -1, synth_size = -1, synth_steps = -1, synth_looks = -1;
  uint64_t synth_seed = 0;
  double synth_cov = -1, synth_thick = -1;
  bool synth_cloud_all = false;
  auto* synth_rois_opt = synth->add_option("--rois", synth_rois, "Number of regions");
  auto* synth_size_opt = synth->add_option("--size", synth_size, "Image size");
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Root seed");
  auto* synth_cov_opt = synth->add_option("--coverage", synth_cov, "Cloud coverage target");
  auto* synth_thick_opt = synth->add_option("--thickness", synth_thick, "Cloud thickness");
  auto* synth_steps_opt = synth->add_option("--steps", synth_steps, "Time steps per series");
  auto* synth_looks_opt = synth->add_option("--looks", synth_looks, "Speckle looks");
  auto* synth_cloud_all_opt =
      synth->add_flag("--cloud-all", synth_cloud_all, "Cloud every frame, not just the last");

  CommonOpts index_common;
  std::string index_root = "dataset";
  CLI::App* index_cmd = ds->add_subcommand("index", "(Re)build the index manifest");
  index_cmd->add_option("--root", index_root, "Dataset root")->required();

  CommonOpts split_common;
  std::string split_root = "dataset";
  int split_iters = -1, split_n = -1, split_bins = -1;
  uint64_t split_seed = 0;
  CLI::App* split_cmd = ds->add_subcommand("split", "Histogram-balanced train/val/test split");
  add_config_option(split_cmd, split_common);
  split_cmd->add_option("--root", split_root, "Dataset root")->required();
  auto* split_iters_opt = split_cmd->add_option("--iters", split_iters, "Search iterations");
  auto* split_n_opt = split_cmd->add_option("--n", split_n, "Sampled images per side");
  auto* split_bins_opt = split_cmd->add_option("--bins", split_bins, "Histogram bins");
  auto* split_seed_opt = split_cmd->add_option("--seed", split_seed, "Root seed");

  // train ---------------------------------------------------------------
  CLI::App* train = app.add_subcommand("train", "Train one branch");
  train->require_subcommand(1);
  struct TrainOpts {
    CommonOpts common;
    std::string root = "dataset";
    std::string out = "runs";
    uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    int max_epochs = -1;
    CLI::Option* max_epochs_opt = nullptr;
    int steps = -1;
    CLI::Option* steps_opt = nullptr;
    int classes = -1;
    CLI::Option* classes_opt = nullptr;
    int epochs = -1;
    CLI::Option* epochs_opt = nullptr;
    bool resume = false;
  };
  const auto add_train_opts = [](CLI::App* cmd, TrainOpts& o) {
    add_config_option(cmd, o.common);
    cmd->add_option("--root", o.root, "Dataset root");
    cmd->add_option("--out", o.out, "Checkpoint/log directory");
    o.seed_opt = cmd->add_option("--seed", o.seed, "Root seed");
    cmd->add_flag("--resume", o.resume, "Continue from an existing checkpoint");
  };
  TrainOpts tc_opts, tg_opts, th_opts;
  CLI::App* tconv = train->add_subcommand("convlstm", "Temporal forecasting branch");
  add_train_opts(tconv, tc_opts);
  tc_opts.max_epochs_opt = tconv->add_option("--max-epochs", tc_opts.max_epochs, "Epoch cap");
  CLI::App* tcgan = train->add_subcommand("cgan", "SAR-to-optical translation branch");
  add_train_opts(tcgan, tg_opts);
  tg_opts.steps_opt = tcgan->add_option("--steps", tg_opts.steps, "Training steps");
  CLI::App* thead = train->add_subcommand("head", "Fusion head");
  add_train_opts(thead, th_opts);
  th_opts.classes_opt = thead->add_option("--classes", th_opts.classes, "Intensity classes");
  th_opts.epochs_opt = thead->add_option("--epochs", th_opts.epochs, "Training epochs");

  // infer ---------------------------------------------------------------
  std::string infer_roi, infer_ckpt = "runs", infer_out = "prediction.f32";
  bool dump_intermediates = false, infer_png = false;
  CLI::App* infer = app.add_subcommand("infer", "End-to-end cloud-free prediction");
  infer->add_option("--roi", infer_roi, "ROI directory with t0..tn subdirectories")->required();
  infer->add_option("--checkpoints", infer_ckpt, "Directory with the three checkpoints");
  infer->add_option("--out", infer_out, "Output tensor path");
  infer->add_flag("--dump-intermediates", dump_intermediates,
                  "Also write the two branch predictions");
  infer->add_flag("--png", infer_png, "Export an 8-bit RGB preview");

  // evaluate ------------------------------------------------------------
  CommonOpts eval_common;
  std::string eval_pred, eval_gt, eval_out = "eval";
  int eval_radius = -1;
  bool eval_degrees = false;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Batch metric evaluation");
  add_config_option(evaluate, eval_common);
  evaluate->add_option("--pred", eval_pred, "Prediction directory")->required();
  evaluate->add_option("--gt", eval_gt, "Ground-truth directory")->required();
  evaluate->add_option("--out", eval_out, "Report directory");
  auto* eval_radius_opt =
      evaluate->add_option("--csc-radius", eval_radius, "Shift radius (0 disables CSC)");
  auto* eval_degrees_opt = evaluate->add_flag("--degrees", eval_degrees, "SAM in degrees");

  // report ---------------------------------------------------------------
  std::string report_metrics, report_out = "report";
  std::vector<std::string> report_logs;
  CLI::App* report_cmd = app.add_subcommand("report", "Tables and plots from a metrics table");
  report_cmd->add_option("--metrics", report_metrics, "metrics.tsv path")->required();
  report_cmd->add_option("--out", report_out, "Report directory");
  report_cmd->add_option("--train-log", report_logs, "Training log(s) for loss curves");

  // config ---------------------------------------------------------------
  CommonOpts config_common;
  uint64_t config_seed = 0;
  int config_size = -1;
  CLI::App* config_cmd = app.add_subcommand("config", "Print the effective configuration");
  add_config_option(config_cmd, config_common);
  auto* config_seed_opt = config_cmd->add_option("--seed", config_seed, "Root seed");
  auto* config_size_opt = config_cmd->add_option("--size", config_size, "Image size");

  try {
    app.parse(argc, argv);

    if (synth->parsed()) {
      RunConfig cfg = effective_config(synth_common);
      if (synth_rois_opt->count()) cfg.rois = synth_rois;
      if (synth_size_opt->count()) cfg.size = synth_size;
      if (synth_seed_opt->count()) cfg.seed = synth_seed;
      if (synth_cov_opt->count()) cfg.coverage = synth_cov;
      if (synth_thick_opt->count()) cfg.thickness = synth_thick;
      if (synth_steps_opt->count()) cfg.steps = synth_steps;
      if (synth_looks_opt->count()) cfg.looks = synth_looks;
      if (synth_cloud_all_opt->count()) cfg.cloud_all = synth_cloud_all;
      return cmd_dataset_synth(cfg, synth_out);
    }
    if (index_cmd->parsed()) return cmd_dataset_index(index_root);
    if (split_cmd->parsed()) {
      RunConfig cfg = effective_config(split_common);
      if (split_iters_opt->count()) cfg.split_iterations = split_iters;
      if (split_n_opt->count()) cfg.split_n = split_n;
      if (split_bins_opt->count()) cfg.split_bins = split_bins;
      if (split_seed_opt->count()) cfg.seed = split_seed;
      return cmd_dataset_split(cfg, split_root);
    }
    if (tconv->parsed()) {
      RunConfig cfg = effective_config(tc_opts.common);
      if (tc_opts.seed_opt->count()) cfg.seed = tc_opts.seed;
      if (tc_opts.max_epochs_opt->count()) cfg.convlstm_max_epochs = tc_opts.max_epochs;
      return cmd_train_convlstm(cfg, tc_opts.root, tc_opts.out, tc_opts.resume);
    }
    if (tcgan->parsed()) {
      RunConfig cfg = effective_config(tg_opts.common);
      if (tg_opts.seed_opt->count()) cfg.seed = tg_opts.seed;
      if (tg_opts.steps_opt->count()) cfg.cgan_steps = tg_opts.steps;
      return cmd_train_cgan(cfg, tg_opts.root, tg_opts.out, tg_opts.resume);
    }
    if (thead->parsed()) {
      RunConfig cfg = effective_config(th_opts.common);
      if (th_opts.seed_opt->count()) cfg.seed = th_opts.seed;
      if (th_opts.classes_opt->count()) cfg.classes = th_opts.classes;
      if (th_opts.epochs_opt->count()) cfg.head_epochs = th_opts.epochs;
      return cmd_train_head(cfg, th_opts.root, th_opts.out, th_opts.resume);
    }
    if (infer->parsed())
      return cmd_infer(infer_roi, infer_ckpt, infer_out, dump_intermediates, infer_png);
    if (evaluate->parsed()) {
      RunConfig cfg = effective_config(eval_common);
      if (eval_radius_opt->count()) {
        cfg.csc_radius = eval_radius;
        cfg.csc = eval_radius > 0;
      }
      if (eval_degrees_opt->count()) cfg.degrees = eval_degrees;
      return cmd_evaluate(cfg, eval_pred, eval_gt, eval_out);
    }
    if (report_cmd->parsed()) {
      plfm::report::ReportInputs inputs;
      inputs.metrics_tsv = report_metrics;
      for (const auto& log : report_logs) inputs.train_logs.emplace_back(log);
      const int plots = plfm::report::write_report(inputs, report_out);
      std::printf("report: %d plots under %s\n", plots, report_out.c_str());
      return 0;
    }
    if (config_cmd->parsed()) {
      RunConfig cfg = effective_config(config_common);
      if (config_seed_opt->count()) cfg.seed = config_seed;
      if (config_size_opt->count()) cfg.size = config_size;
      std::fputs(plfm::config::dump_config(cfg).c_str(), stdout);
      return 0;
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const plfm::CompatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const plfm::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
