#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "plfm/tensor_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& cwd) {
  const fs::path out_file = cwd / "_cli_out.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" + PLFM_BIN + "' " + args + " > '" +
                          out_file.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream f(out_file);
  std::stringstream ss;
  ss << f.rdbuf();
  fs::remove(out_file);
  return {WEXITSTATUS(status), ss.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plfm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream f(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    files[fs::relative(entry.path(), root).string()] = ss.str();
  }
  return files;
}

int count_lines(const fs::path& p, bool skip_comments = true) {
  std::ifstream f(p);
  std::string line;
  int n = 0;
  while (std::getline(f, line))
    if (!line.empty() && (!skip_comments || line[0] != '#')) ++n;
  return n;
}

const char* kTinyConfig = R"(
[data]
size = 32

[convlstm]
layers = 1
filters = 6
max_epochs = 2

[cgan]
depth = 2
base_filters = 6
steps = 6
batch = 4

[head]
filters = 6
epochs = 1
)";

}  // namespace

TEST_CASE("dataset synth is byte-identical across reruns of one seed") {
  const fs::path dir = scratch("synth_det");
  CHECK(run_cli("dataset synth --out a --rois 4 --size 32 --seed 7", dir).exit_code == 0);
  CHECK(run_cli("dataset synth --out b --rois 4 --size 32 --seed 7", dir).exit_code == 0);
  const auto a = read_tree(dir / "a");
  const auto b = read_tree(dir / "b");
  REQUIRE(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    REQUIRE(b.count(name) == 1);
    CHECK(bytes == b.at(name));
  }
  CHECK(run_cli("dataset synth --out c --rois 4 --size 32 --seed 8", dir).exit_code == 0);
  CHECK(read_tree(dir / "c") != a);
}

TEST_CASE("dataset split prints the minimum of the written trace and carves 80/20/10") {
  const fs::path dir = scratch("split");
  REQUIRE(run_cli("dataset synth --out ds --rois 10 --size 16 --seed 3", dir).exit_code == 0);
  const RunResult res = run_cli("dataset split --root ds --iters 50 --n 16 --bins 20 --seed 1", dir);
  CHECK(res.exit_code == 0);

  double printed = -1;
  {
    std::istringstream is(res.output);
    std::string word;
    while (is >> word)
      if (word == "dissimilarity") {
        is >> printed;
        break;
      }
  }
  REQUIRE(printed >= 0);

  std::ifstream trace(dir / "ds" / "trace.tsv");
  std::string line;
  std::getline(trace, line);
  double lo = 1e300;
  while (std::getline(trace, line)) {
    const auto tab = line.find('\t');
    lo = std::min(lo, std::stod(line.substr(tab + 1)));
  }
  CHECK(printed == doctest::Approx(lo).epsilon(1e-12));

  // 10 ROIs: val = 2 (20%), test = 1 (10% of the remaining 8), train = 7
  const auto labels = [&] {
    std::map<std::string, int> counts;
    std::ifstream f(dir / "ds" / "split.tsv");
    std::string row;
    std::getline(f, row);
    while (std::getline(f, row)) {
      const auto tab = row.find('\t');
      counts[row.substr(tab + 1)]++;
    }
    return counts;
  }();
  CHECK(labels.at("val") == 2);
  CHECK(labels.at("test") == 1);
  CHECK(labels.at("train") == 7);
}

TEST_CASE("training commands write logs, honor --max-epochs, and reproduce per seed") {
  const fs::path dir = scratch("train");
  std::ofstream(dir / "cfg.ini") << kTinyConfig;
  REQUIRE(run_cli("dataset synth --out ds --rois 4 --size 32 --seed 11", dir).exit_code == 0);
  REQUIRE(run_cli("dataset split --root ds --iters 10 --n 8 --seed 2", dir).exit_code == 0);

  const RunResult one =
      run_cli("train convlstm --root ds --out r1 --config cfg.ini --seed 5 --max-epochs 1", dir);
  CHECK(one.exit_code == 0);
  CHECK(count_lines(dir / "r1" / "convlstm_log.tsv") == 2);  // header + one epoch row

  const RunResult again =
      run_cli("train convlstm --root ds --out r2 --config cfg.ini --seed 5 --max-epochs 1", dir);
  CHECK(again.exit_code == 0);
  std::ifstream l1(dir / "r1" / "convlstm_log.tsv"), l2(dir / "r2" / "convlstm_log.tsv");
  std::stringstream s1, s2;
  s1 << l1.rdbuf();
  s2 << l2.rdbuf();
  CHECK(s1.str() == s2.str());

  CHECK(run_cli("train cgan --root ds --out r1 --config cfg.ini --seed 5", dir).exit_code == 0);
  CHECK(count_lines(dir / "r1" / "cgan_log.tsv") == 7);  // header + 6 steps
  CHECK(run_cli("train head --root ds --out r1 --config cfg.ini --seed 5 --classes 16", dir)
            .exit_code == 0);
  CHECK(fs::exists(dir / "r1" / "head.bin"));
}

TEST_CASE("training without a split fails with a one-line data error") {
  const fs::path dir = scratch("nosplit");
  std::ofstream(dir / "cfg.ini") << kTinyConfig;
  REQUIRE(run_cli("dataset synth --out ds --rois 3 --size 32 --seed 1", dir).exit_code == 0);
  const RunResult res = run_cli("train convlstm --root ds --out r --config cfg.ini", dir);
  CHECK(res.exit_code == 2);
  CHECK(res.output.substr(0, 7) == "error: ");
  CHECK(std::count(res.output.begin(), res.output.end(), '\n') == 1);
}

TEST_CASE("infer writes no intermediates by default and two with the flag") {
  const fs::path dir = scratch("infer");
  std::ofstream(dir / "cfg.ini") << kTinyConfig;
  REQUIRE(run_cli("dataset synth --out ds --rois 4 --size 32 --seed 13", dir).exit_code == 0);
  REQUIRE(run_cli("dataset split --root ds --iters 10 --n 8 --seed 2", dir).exit_code == 0);
  REQUIRE(run_cli("train convlstm --root ds --out r --config cfg.ini --seed 5", dir).exit_code == 0);
  REQUIRE(run_cli("train cgan --root ds --out r --config cfg.ini --seed 5", dir).exit_code == 0);
  REQUIRE(run_cli("train head --root ds --out r --config cfg.ini --seed 5 --classes 16", dir)
              .exit_code == 0);

  fs::create_directories(dir / "out");
  CHECK(run_cli("infer --roi ds/roi0003 --checkpoints r --out out/p.f32", dir).exit_code == 0);
  int extra = 0;
  for (const auto& e : fs::directory_iterator(dir / "out"))
    if (e.path().filename().string().find("hat") != std::string::npos) ++extra;
  CHECK(extra == 0);

  plfm::io::Meta meta;
  plfm::io::read_tensor(dir / "out" / "p.f32", &meta);
  CHECK(meta.extra.count("convlstm_checkpoint") == 1);
  CHECK(meta.extra.count("cgan_checkpoint") == 1);
  CHECK(meta.extra.count("head_checkpoint") == 1);

  CHECK(run_cli("infer --roi ds/roi0003 --checkpoints r --out out2/p.f32 --dump-intermediates",
                dir)
            .exit_code == 0);
  int tensors = 0;
  for (const auto& e : fs::directory_iterator(dir / "out2"))
    if (e.path().extension() == ".f32") ++tensors;
  CHECK(tensors == 3);  // prediction plus exactly two intermediates
  CHECK(fs::exists(dir / "out2" / "p_y_hat.f32"));
  CHECK(fs::exists(dir / "out2" / "p_z_hat.f32"));
}

TEST_CASE("infer rejects checkpoints trained at incompatible sizes") {
  const fs::path dir = scratch("compat");
  std::ofstream(dir / "cfg.ini") << kTinyConfig;
  std::ofstream(dir / "cfg16.ini") << "[data]\nsize = 16\n[convlstm]\nlayers = 1\nfilters = "
                                      "4\nmax_epochs = 1\n[cgan]\ndepth = 2\nbase_filters = "
                                      "4\nsteps = 2\nbatch = 2\n[head]\nfilters = 4\nepochs = 1\n";
  REQUIRE(run_cli("dataset synth --out ds --rois 3 --size 32 --seed 17", dir).exit_code == 0);
  REQUIRE(run_cli("dataset split --root ds --iters 5 --n 4 --seed 2", dir).exit_code == 0);
  REQUIRE(run_cli("dataset synth --out ds16 --rois 3 --size 16 --seed 17", dir).exit_code == 0);
  REQUIRE(run_cli("dataset split --root ds16 --iters 5 --n 4 --seed 2", dir).exit_code == 0);

  REQUIRE(run_cli("train convlstm --root ds --out r32 --config cfg.ini --seed 5", dir).exit_code == 0);
  REQUIRE(run_cli("train cgan --root ds --out r32 --config cfg.ini --seed 5", dir).exit_code == 0);
  REQUIRE(run_cli("train head --root ds --out r32 --config cfg.ini --seed 5 --classes 16", dir)
              .exit_code == 0);
  REQUIRE(run_cli("train cgan --root ds16 --out r16 --config cfg16.ini --seed 5", dir).exit_code == 0);

  fs::create_directories(dir / "mixed");
  fs::copy(dir / "r32" / "convlstm.bin", dir / "mixed" / "convlstm.bin");
  fs::copy(dir / "r32" / "convlstm.manifest", dir / "mixed" / "convlstm.manifest");
  fs::copy(dir / "r32" / "head.bin", dir / "mixed" / "head.bin");
  fs::copy(dir / "r32" / "head.manifest", dir / "mixed" / "head.manifest");
  fs::copy(dir / "r16" / "cgan_g.bin", dir / "mixed" / "cgan_g.bin");
  fs::copy(dir / "r16" / "cgan_g.manifest", dir / "mixed" / "cgan_g.manifest");

  const RunResult res = run_cli("infer --roi ds/roi0000 --checkpoints mixed --out p.f32", dir);
  CHECK(res.exit_code == 3);
  CHECK(res.output.find("error:") != std::string::npos);
}

TEST_CASE("evaluate: ground truth against itself is the ideal row, buckets as printed") {
  const fs::path dir = scratch("eval");
  std::mt19937_64 rng(19);
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  // four pairs whose masks land in the four coverage buckets
  const double coverages[4] = {0.10, 0.35, 0.65, 0.90};
  for (int i = 0; i < 4; ++i) {
    const auto img = testutil::random_optical(16, 16, rng, 0.05, 0.95);
    const std::string stem = "img" + std::to_string(i);
    plfm::io::Meta meta;
    plfm::io::write_optical(dir / "gt" / (stem + ".f32"), img, meta);
    plfm::io::write_optical(dir / "pred" / (stem + ".f32"), img, meta);
    plfm::Tensor mask({16, 16, 1});
    const int cells = static_cast<int>(coverages[i] * 256);
    for (int j = 0; j < cells; ++j) mask[j] = 1.0;
    plfm::io::write_tensor(dir / "gt" / (stem + ".mask.f32"), mask, plfm::io::Meta{});
  }
  const RunResult res = run_cli("evaluate --pred pred --gt gt --out ev --csc-radius 0", dir);
  CHECK(res.exit_code == 0);

  std::ifstream rows(dir / "ev" / "metrics.tsv");
  std::string line;
  std::getline(rows, line);  // header
  int checked = 0;
  while (std::getline(rows, line)) {
    std::istringstream is(line);
    std::string id;
    double psnr, ssim;
    is >> id >> psnr >> ssim;
    CHECK(psnr == doctest::Approx(100.0));
    CHECK(ssim == doctest::Approx(1.0));
    ++checked;
  }
  CHECK(checked == 4);

  std::ifstream buckets(dir / "ev" / "buckets.tsv");
  std::vector<std::string> bucket_rows;
  std::getline(buckets, line);
  while (std::getline(buckets, line))
    if (!line.empty()) bucket_rows.push_back(line.substr(0, line.find('\t')));
  REQUIRE(bucket_rows.size() == 4);
  CHECK(bucket_rows[0] == "<=20%");
  CHECK(bucket_rows[1] == "20-50%");
  CHECK(bucket_rows[2] == "50-80%");
  CHECK(bucket_rows[3] == "80-100%");
}

TEST_CASE("white-pixel coverage fallback kicks in when no mask exists") {
  const fs::path dir = scratch("whitepix");
  std::mt19937_64 rng(23);
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  const auto img = testutil::random_optical(16, 16, rng, 0.1, 0.6);
  plfm::io::Meta meta;
  plfm::io::write_optical(dir / "gt" / "a.f32", img, meta);
  plfm::io::write_optical(dir / "pred" / "a.f32", img, meta);
  // cloudy companion: ~60% of pixels near white
  plfm::data::OpticalImage cloudy = img;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) cloudy.values.at(y, x, c) = 0.95;
  plfm::io::write_optical(dir / "gt" / "a.cloudy.f32", cloudy, meta);

  REQUIRE(run_cli("evaluate --pred pred --gt gt --out ev --csc-radius 0", dir).exit_code == 0);
  std::ifstream covs(dir / "ev" / "coverage.tsv");
  std::string line;
  std::getline(covs, line);
  std::getline(covs, line);
  const double cov = std::stod(line.substr(line.find('\t') + 1));
  CHECK(cov == doctest::Approx(10.0 / 16.0).epsilon(0.01));
}

TEST_CASE("report: empty metrics table yields an empty report with zero plots") {
  const fs::path dir = scratch("report_empty");
  std::ofstream(dir / "metrics.tsv") << "";
  const RunResult res = run_cli("report --metrics metrics.tsv --out rep", dir);
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("0 plots") != std::string::npos);
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "rep"))
    if (e.path().extension() == ".png") ++pngs;
  CHECK(pngs == 0);
}

TEST_CASE("report plots are deterministic across runs") {
  const fs::path dir = scratch("report_det");
  {
    std::ofstream m(dir / "metrics.tsv");
    m << "image_id\tpsnr\tssim\tsam\tmse\trmse\tcc\tdd\tuqi\tcsc\te1\te2\n";
    m << "a\t20.5\t0.8\t0.1\t0.01\t0.1\t0.9\t0.05\t0.95\t0\t0\t0\n";
    m << "b\t25.5\t0.9\t0.05\t0.005\t0.07\t0.95\t0.03\t0.97\t0\t0\t0\n";
  }
  REQUIRE(run_cli("report --metrics metrics.tsv --out r1", dir).exit_code == 0);
  REQUIRE(run_cli("report --metrics metrics.tsv --out r2", dir).exit_code == 0);
  const auto t1 = read_tree(dir / "r1");
  const auto t2 = read_tree(dir / "r2");
  REQUIRE(!t1.empty());
  CHECK(t1 == t2);
}

TEST_CASE("config precedence: flag beats file beats default") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "cfg.ini") << "[data]\nseed = 42\nsize = 128\n";

  const RunResult def = run_cli("config", dir);
  CHECK(def.output.find("seed = 0") != std::string::npos);
  CHECK(def.output.find("size = 256") != std::string::npos);

  const RunResult file = run_cli("config --config cfg.ini", dir);
  CHECK(file.output.find("seed = 42") != std::string::npos);
  CHECK(file.output.find("size = 128") != std::string::npos);

  const RunResult flag = run_cli("config --config cfg.ini --seed 7 --size 64", dir);
  CHECK(flag.output.find("seed = 7") != std::string::npos);
  CHECK(flag.output.find("size = 64") != std::string::npos);
}

TEST_CASE("paper defaults survive in the effective configuration") {
  const fs::path dir = scratch("defaults");
  const RunResult res = run_cli("config", dir);
  CHECK(res.output.find("lr = 0.01") != std::string::npos);     // forecasting branch
  CHECK(res.output.find("lr = 0.0002") != std::string::npos);   // translation + head
  CHECK(res.output.find("batch = 16") != std::string::npos);
  CHECK(res.output.find("batch = 32") != std::string::npos);
  CHECK(res.output.find("n = 3") != std::string::npos);
  CHECK(res.output.find("classes = 256") != std::string::npos);
  CHECK(res.output.find("iterations = 2000") != std::string::npos);
  CHECK(res.output.find("n = 150") != std::string::npos);
  CHECK(res.output.find("bins = 20") != std::string::npos);
  CHECK(res.output.find("lambda = 100") != std::string::npos);
  CHECK(res.output.find("csc_radius = 2") != std::string::npos);
}

TEST_CASE("exit codes: usage 1, data error 2") {
  const fs::path dir = scratch("exitcodes");
  CHECK(run_cli("no-such-command", dir).exit_code == 1);
  CHECK(run_cli("dataset split", dir).exit_code == 1);  // missing required --root
  std::ofstream(dir / "bad.ini") << "[data]\nnonsense_key = 1\n";
  const RunResult res = run_cli("config --config bad.ini", dir);
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("unknown key") != std::string::npos);
  CHECK(run_cli("evaluate --pred missing --gt missing", dir).exit_code == 2);
}
