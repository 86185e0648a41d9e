#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cones/config.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("CONES_CLI");
  REQUIRE_MESSAGE(p != nullptr, "CONES_CLI must point at the cones binary");
  return p;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string scratch(const std::string& name) {
  const std::string dir = "/tmp/cones_cli_" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long count_lines(const std::string& text) {
  long n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

const std::string kData = "/tmp/cones_cli_shared_dataset";

void ensure_dataset() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kData);
  REQUIRE(run("synth-data --out " + kData + " --train 3 --val 2 --size 32 --seed 77") == 0);
  done = true;
}

}  // namespace

TEST_CASE("synth-data writes the documented layout") {
  ensure_dataset();
  CHECK(fs::is_regular_file(kData + "/manifest.txt"));
  CHECK(fs::is_regular_file(kData + "/train/0/src_0.cnsf"));
  CHECK(fs::is_regular_file(kData + "/train/2/src_2.cnsf"));
  CHECK(fs::is_regular_file(kData + "/train/1/tgt_0.cnsf"));
  CHECK(fs::is_regular_file(kData + "/val/1/mask.cnsf"));
  CHECK_FALSE(fs::exists(kData + "/train/3"));
}

TEST_CASE("unknown flags and bad configs exit nonzero") {
  ensure_dataset();
  CHECK(run("definitely-not-a-command") != 0);
  CHECK(run("train --no-such-flag 1") != 0);
  CHECK(run("translate --checkpoint /nonexistent --data " + kData + " --out /tmp/x") != 0);

  const std::string dir = scratch("badcfg");
  std::ofstream(dir + "/bad.cfg") << "steps=10\nmystery_key=3\n";
  CHECK(run("train --config " + dir + "/bad.cfg --data " + kData + " --out " + dir + "/o") !=
        0);
}

TEST_CASE("train/translate/eval/spectrum pipeline and manifests") {
  ensure_dataset();
  const std::string dir = scratch("pipeline");

  REQUIRE(run("train --data " + kData + " --out " + dir + "/run --steps 12 --crop_h 32 " +
              "--crop_w 32 --seed 9") == 0);
  CHECK(fs::is_regular_file(dir + "/run/loss.csv"));
  CHECK(fs::is_regular_file(dir + "/run/generator/checkpoint.txt"));
  CHECK(fs::is_regular_file(dir + "/run/discriminator/checkpoint.txt"));
  const std::string loss = slurp(dir + "/run/loss.csv");
  CHECK(count_lines(loss) == 13);  // header + 12 steps
  CHECK(loss.rfind("step,L_D,L_rec,L_adv,L_fm,L_reg,L_total\n", 0) == 0);

  // the manifest is a loadable config holding the resolved run settings
  auto kv = cones::KeyValues::parse_file(dir + "/run/manifest.txt");
  CHECK(kv.get("mode") == "shift");
  CHECK(kv.get_long("steps") == 12);
  CHECK(kv.get_long("seed") == 9);

  REQUIRE(run("translate --checkpoint " + dir + "/run/generator --data " + kData +
              " --split val --out " + dir + "/pred --png") == 0);
  CHECK(fs::is_regular_file(dir + "/pred/0/fake_0.cnsf"));
  CHECK(fs::is_regular_file(dir + "/pred/1/fake_0.png"));

  REQUIRE(run("eval --pred " + dir + "/pred --data " + kData + " --split val --out " + dir +
              "/metrics") == 0);
  const std::string metrics = slurp(dir + "/metrics/metrics.csv");
  CHECK(metrics.rfind("image_id,psnr_db,ssim,cropped_psnr_db,cropped_ssim\n", 0) == 0);
  CHECK(count_lines(metrics) == 3);  // header + 2 val images

  REQUIRE(run("spectrum --set real=" + kData + "/val:tgt_0.cnsf --set model=" + dir +
              "/pred:fake_0.cnsf --out " + dir + "/spectra --plot") == 0);
  const std::string spectrum = slurp(dir + "/spectra/real_spectrum.csv");
  CHECK(spectrum.rfind("omega_k,mean_log_magnitude\n", 0) == 0);
  CHECK(count_lines(spectrum) == 17);  // header + 16 bins for 32x32 images
  CHECK(fs::is_regular_file(dir + "/spectra/spectra.png"));
}

TEST_CASE("identical seeds give identical loss CSVs; manifests round-trip") {
  ensure_dataset();
  const std::string dir = scratch("determinism");
  const std::string args = "train --data " + kData +
                           " --steps 10 --crop_h 32 --crop_w 32 --seed 4242 --out ";
  REQUIRE(run(args + dir + "/a") == 0);
  REQUIRE(run(args + dir + "/b") == 0);
  CHECK(slurp(dir + "/a/loss.csv") == slurp(dir + "/b/loss.csv"));

  // re-run from the first run's manifest
  REQUIRE(run("train --config " + dir + "/a/manifest.txt --out " + dir + "/c") == 0);
  CHECK(slurp(dir + "/a/loss.csv") == slurp(dir + "/c/loss.csv"));
  CHECK(slurp(dir + "/a/generator/mlp.w0.cnsf") == slurp(dir + "/c/generator/mlp.w0.cnsf"));
}

TEST_CASE("ablate emits the four-row grid") {
  ensure_dataset();
  const std::string dir = scratch("ablate");
  // deliberately tiny: 4 steps per cell on the small dataset
  REQUIRE(run("ablate --data " + kData + " --out " + dir + " --steps 4 --crop_h 32 " +
              "--crop_w 32 --seed 5") == 0);
  const std::string csv = slurp(dir + "/ablation.csv");
  CHECK(csv.rfind("shift_modulation,intensity,param_generated,psnr,ssim\n", 0) == 0);
  CHECK(count_lines(csv) == 5);  // header + exactly 4 rows
  CHECK(csv.find("yes,yes,256,") != std::string::npos);
  CHECK(csv.find("yes,no,256,") != std::string::npos);
  CHECK(csv.find("no,yes,13569,") != std::string::npos);
  CHECK(csv.find("no,no,13377,") != std::string::npos);
  for (const char* run_dir :
       {"run_shift-yes_intensity-yes", "run_shift-no_intensity-no"}) {
    CHECK(fs::is_regular_file(dir + "/" + run_dir + "/loss.csv"));
    auto st = cones::KeyValues::parse_file(dir + "/" + run_dir + "/status.txt");
    CHECK(st.get("status") == "completed");
  }
}

TEST_CASE("gradcheck subcommand") {
  const std::string dir = scratch("gradcheck");
  CHECK(run("gradcheck --configs 3 --out " + dir) == 0);
  CHECK(fs::is_regular_file(dir + "/gradcheck.txt"));
}
