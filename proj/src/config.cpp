#include "plfm/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "plfm/errors.hpp"

namespace plfm::config {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

int to_int(const std::string& v) {
  size_t pos = 0;
  const int x = std::stoi(v, &pos);
  if (pos != v.size()) throw DataError("config: malformed integer '" + v + "'");
  return x;
}

uint64_t to_u64(const std::string& v) {
  size_t pos = 0;
  const uint64_t x = std::stoull(v, &pos);
  if (pos != v.size()) throw DataError("config: malformed integer '" + v + "'");
  return x;
}

double to_double(const std::string& v) {
  size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw DataError("config: malformed number '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError("config: malformed boolean '" + v + "'");
}

const std::map<std::string, Setter>& registry() {
  static const std::map<std::string, Setter> reg = {
      {"data.root", [](RunConfig& c, const std::string& v) { c.data_root = v; }},
      {"data.size", [](RunConfig& c, const std::string& v) { c.size = to_int(v); }},
      {"data.n", [](RunConfig& c, const std::string& v) { c.seq_len = to_int(v); }},
      {"data.classes", [](RunConfig& c, const std::string& v) { c.classes = to_int(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"synth.rois", [](RunConfig& c, const std::string& v) { c.rois = to_int(v); }},
      {"synth.steps", [](RunConfig& c, const std::string& v) { c.steps = to_int(v); }},
      {"synth.coverage", [](RunConfig& c, const std::string& v) { c.coverage = to_double(v); }},
      {"synth.thickness", [](RunConfig& c, const std::string& v) { c.thickness = to_double(v); }},
      {"synth.drift", [](RunConfig& c, const std::string& v) { c.drift = to_double(v); }},
      {"synth.brightness_drift",
       [](RunConfig& c, const std::string& v) { c.brightness_drift = to_double(v); }},
      {"synth.cloud_all", [](RunConfig& c, const std::string& v) { c.cloud_all = to_bool(v); }},
      {"synth.looks", [](RunConfig& c, const std::string& v) { c.looks = to_int(v); }},
      {"split.iterations",
       [](RunConfig& c, const std::string& v) { c.split_iterations = to_int(v); }},
      {"split.n", [](RunConfig& c, const std::string& v) { c.split_n = to_int(v); }},
      {"split.bins", [](RunConfig& c, const std::string& v) { c.split_bins = to_int(v); }},
      {"split.val_fraction",
       [](RunConfig& c, const std::string& v) { c.val_fraction = to_double(v); }},
      {"split.test_fraction",
       [](RunConfig& c, const std::string& v) { c.test_fraction = to_double(v); }},
      {"split.normalized",
       [](RunConfig& c, const std::string& v) { c.split_normalized = to_bool(v); }},
      {"convlstm.layers", [](RunConfig& c, const std::string& v) { c.convlstm_layers = to_int(v); }},
      {"convlstm.filters",
       [](RunConfig& c, const std::string& v) { c.convlstm_filters = to_int(v); }},
      {"convlstm.kernel", [](RunConfig& c, const std::string& v) { c.convlstm_kernel = to_int(v); }},
      {"convlstm.peephole",
       [](RunConfig& c, const std::string& v) { c.convlstm_peephole = to_bool(v); }},
      {"convlstm.pooling",
       [](RunConfig& c, const std::string& v) { c.convlstm_pooling = to_bool(v); }},
      {"convlstm.lr", [](RunConfig& c, const std::string& v) { c.convlstm_lr = to_double(v); }},
      {"convlstm.batch", [](RunConfig& c, const std::string& v) { c.convlstm_batch = to_int(v); }},
      {"convlstm.delta", [](RunConfig& c, const std::string& v) { c.huber_delta = to_double(v); }},
      {"convlstm.max_epochs",
       [](RunConfig& c, const std::string& v) { c.convlstm_max_epochs = to_int(v); }},
      {"convlstm.plateau_factor",
       [](RunConfig& c, const std::string& v) { c.plateau_factor = to_double(v); }},
      {"convlstm.plateau_patience",
       [](RunConfig& c, const std::string& v) { c.plateau_patience = to_int(v); }},
      {"convlstm.early_patience",
       [](RunConfig& c, const std::string& v) { c.early_patience = to_int(v); }},
      {"cgan.depth", [](RunConfig& c, const std::string& v) { c.cgan_depth = to_int(v); }},
      {"cgan.base_filters", [](RunConfig& c, const std::string& v) { c.cgan_filters = to_int(v); }},
      {"cgan.dropout", [](RunConfig& c, const std::string& v) { c.cgan_dropout = to_double(v); }},
      {"cgan.patch", [](RunConfig& c, const std::string& v) { c.patch_target = to_int(v); }},
      {"cgan.gamma1", [](RunConfig& c, const std::string& v) { c.gamma1 = to_double(v); }},
      {"cgan.gamma2", [](RunConfig& c, const std::string& v) { c.gamma2 = to_double(v); }},
      {"cgan.lambda", [](RunConfig& c, const std::string& v) { c.lambda_l1 = to_double(v); }},
      {"cgan.lr", [](RunConfig& c, const std::string& v) { c.cgan_lr = to_double(v); }},
      {"cgan.batch", [](RunConfig& c, const std::string& v) { c.cgan_batch = to_int(v); }},
      {"cgan.steps", [](RunConfig& c, const std::string& v) { c.cgan_steps = to_int(v); }},
      {"cgan.adversarial",
       [](RunConfig& c, const std::string& v) { c.adversarial = to_bool(v); }},
      {"cgan.beta1", [](RunConfig& c, const std::string& v) { c.adam_beta1_gan = to_double(v); }},
      {"head.depth", [](RunConfig& c, const std::string& v) { c.head_depth = to_int(v); }},
      {"head.filters", [](RunConfig& c, const std::string& v) { c.head_filters = to_int(v); }},
      {"head.lr", [](RunConfig& c, const std::string& v) { c.head_lr = to_double(v); }},
      {"head.batch", [](RunConfig& c, const std::string& v) { c.head_batch = to_int(v); }},
      {"head.epochs", [](RunConfig& c, const std::string& v) { c.head_epochs = to_int(v); }},
      {"eval.csc", [](RunConfig& c, const std::string& v) { c.csc = to_bool(v); }},
      {"eval.csc_radius", [](RunConfig& c, const std::string& v) { c.csc_radius = to_int(v); }},
      {"eval.degrees", [](RunConfig& c, const std::string& v) { c.degrees = to_bool(v); }},
      {"eval.white_threshold",
       [](RunConfig& c, const std::string& v) { c.white_threshold = to_double(v); }},
  };
  return reg;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

RunConfig defaults() { return RunConfig{}; }

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("config: cannot open " + path.string());
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string s = strip(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw DataError("config: malformed section at line " + std::to_string(lineno));
      section = s.substr(1, s.size() - 2);
      continue;
    }
    auto sep = s.find('=');
    if (sep == std::string::npos) sep = s.find(':');
    if (sep == std::string::npos)
      throw DataError("config: expected key = value at line " + std::to_string(lineno));
    const std::string key = strip(s.substr(0, sep));
    const std::string value = strip(s.substr(sep + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = registry().find(full);
    if (it == registry().end()) throw DataError("config: unknown key '" + full + "'");
    it->second(cfg, value);
  }
  return cfg;
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[data]\n"
     << "root = " << c.data_root << "\n"
     << "size = " << c.size << "\n"
     << "n = " << c.seq_len << "\n"
     << "classes = " << c.classes << "\n"
     << "seed = " << c.seed << "\n\n";
  os << "[synth]\n"
     << "rois = " << c.rois << "\n"
     << "steps = " << c.steps << "\n"
     << "coverage = " << c.coverage << "\n"
     << "thickness = " << c.thickness << "\n"
     << "drift = " << c.drift << "\n"
     << "brightness_drift = " << c.brightness_drift << "\n"
     << "cloud_all = " << (c.cloud_all ? "true" : "false") << "\n"
     << "looks = " << c.looks << "\n\n";
  os << "[split]\n"
     << "iterations = " << c.split_iterations << "\n"
     << "n = " << c.split_n << "\n"
     << "bins = " << c.split_bins << "\n"
     << "val_fraction = " << c.val_fraction << "\n"
     << "test_fraction = " << c.test_fraction << "\n"
     << "normalized = " << (c.split_normalized ? "true" : "false") << "\n\n";
  os << "[convlstm]\n"
     << "layers = " << c.convlstm_layers << "\n"
     << "filters = " << c.convlstm_filters << "\n"
     << "kernel = " << c.convlstm_kernel << "\n"
     << "peephole = " << (c.convlstm_peephole ? "true" : "false") << "\n"
     << "pooling = " << (c.convlstm_pooling ? "true" : "false") << "\n"
     << "lr = " << c.convlstm_lr << "\n"
     << "batch = " << c.convlstm_batch << "\n"
     << "delta = " << c.huber_delta << "\n"
     << "max_epochs = " << c.convlstm_max_epochs << "\n"
     << "plateau_factor = " << c.plateau_factor << "\n"
     << "plateau_patience = " << c.plateau_patience << "\n"
     << "early_patience = " << c.early_patience << "\n\n";
  os << "[cgan]\n"
     << "depth = " << c.cgan_depth << "\n"
     << "base_filters = " << c.cgan_filters << "\n"
     << "dropout = " << c.cgan_dropout << "\n"
     << "patch = " << c.patch_target << "\n"
     << "gamma1 = " << c.gamma1 << "\n"
     << "gamma2 = " << c.gamma2 << "\n"
     << "lambda = " << c.lambda_l1 << "\n"
     << "lr = " << c.cgan_lr << "\n"
     << "batch = " << c.cgan_batch << "\n"
     << "steps = " << c.cgan_steps << "\n"
     << "adversarial = " << (c.adversarial ? "true" : "false") << "\n"
     << "beta1 = " << c.adam_beta1_gan << "\n\n";
  os << "[head]\n"
     << "depth = " << c.head_depth << "\n"
     << "filters = " << c.head_filters << "\n"
     << "lr = " << c.head_lr << "\n"
     << "batch = " << c.head_batch << "\n"
     << "epochs = " << c.head_epochs << "\n\n";
  os << "[eval]\n"
     << "csc = " << (c.csc ? "true" : "false") << "\n"
     << "csc_radius = " << c.csc_radius << "\n"
     << "degrees = " << (c.degrees ? "true" : "false") << "\n"
     << "white_threshold = " << c.white_threshold << "\n";
  return os.str();
}

}  // namespace plfm::config
