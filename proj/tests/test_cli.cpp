#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "tagger/data.hpp"
#include "tagger/util.hpp"

namespace fs = std::filesystem;
using tagger::read_file;
using tagger::write_file;

namespace {

const std::string kCli = TAGGER_CLI_PATH;

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("tagger_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

const char* kSmokeConfig =
    "mode=binary\n"
    "groups=4\n"
    "t_train=2\n"
    "t_eval=3\n"
    "beta=0.2\n"
    "batch_size=20\n"
    "epochs_unsup=1\n"
    "hidden_width=32\n"
    "layers=32\n"
    "norm=layer\n"
    "seed=3\n"
    "class_count=0\n";

struct PngHeader {
  std::size_t width = 0, height = 0;
};

PngHeader png_header(const std::string& path) {
  std::string bytes = read_file(path);
  REQUIRE(bytes.size() > 24);
  REQUIRE(bytes.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) == 0);
  auto be32 = [&](std::size_t off) {
    return (std::size_t(std::uint8_t(bytes[off])) << 24) |
           (std::size_t(std::uint8_t(bytes[off + 1])) << 16) |
           (std::size_t(std::uint8_t(bytes[off + 2])) << 8) |
           std::size_t(std::uint8_t(bytes[off + 3]));
  };
  return {be32(16), be32(20)};
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  Workdir w;
  CHECK(run("generate --dataset bogus --out " + (w / "x.tagd")) == 2);
  CHECK(run("generate --dataset shapes") == 2);                     // missing --out
  CHECK(run("train --config missing.cfg --data missing.tagd --out " + (w / "c")) == 2);
  CHECK(run("eval --checkpoint nope.tagd --data nope.tagd") == 2);
  CHECK(run("generate --dataset tmnist2 --count 5 --out " + (w / "t.tagd")) == 2);  // no mnist dir
  CHECK(run("nonsense") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("generate is byte-deterministic for a fixed seed") {
  Workdir w;
  REQUIRE(run("generate --dataset shapes --count 50 --seed 7 --out " + (w / "a.tagd")) == 0);
  REQUIRE(run("generate --dataset shapes --count 50 --seed 7 --out " + (w / "b.tagd")) == 0);
  CHECK(read_file(w / "a.tagd") == read_file(w / "b.tagd"));
  REQUIRE(run("generate --dataset shapes --count 50 --seed 8 --out " + (w / "c.tagd")) == 0);
  CHECK(read_file(w / "a.tagd") != read_file(w / "c.tagd"));
  // The manifest sidecar exists alongside the artifact.
  CHECK(fs::exists(w / "a.tagd.manifest.json"));
}

TEST_CASE("smoke pipeline: generate, train, eval, visualize") {
  Workdir w;
  write_file(w / "smoke.cfg", kSmokeConfig);
  REQUIRE(run("generate --dataset shapes --count 60 --seed 5 --out " + (w / "data.tagd")) == 0);
  REQUIRE(run("train --config " + (w / "smoke.cfg") + " --data " + (w / "data.tagd") +
              " --val " + (w / "data.tagd") + " --out " + (w / "ckpt.tagd")) == 0);
  CHECK(fs::exists(w / "ckpt.tagd"));
  CHECK(fs::exists(w / "ckpt.tagd.metrics.tsv"));
  CHECK(fs::exists(w / "ckpt.tagd.manifest.json"));
  std::string metrics = read_file(w / "ckpt.tagd.metrics.tsv");
  CHECK(metrics.find("epoch\ttrain_cost\tval_cost_iter1") == 0);

  REQUIRE(run("eval --checkpoint " + (w / "ckpt.tagd") + " --data " + (w / "data.tagd") +
              " --iterations 4 --groups 2 --report " + (w / "report.tsv")) == 0);
  std::string report = read_file(w / "report.tsv");
  CHECK(report.find("iteration\tdenoising_cost") == 0);
  CHECK(report.find("\n4\t") != std::string::npos);  // honored the T override
  CHECK(report.find("ami\t") != std::string::npos);

  // Reports are bitwise reproducible.
  REQUIRE(run("eval --checkpoint " + (w / "ckpt.tagd") + " --data " + (w / "data.tagd") +
              " --iterations 4 --groups 2 --report " + (w / "report2.tsv")) == 0);
  CHECK(read_file(w / "report.tsv") == read_file(w / "report2.tsv"));

  // Visualization: one panel row per iteration plus the ablation image.
  REQUIRE(run("visualize --checkpoint " + (w / "ckpt.tagd") + " --data " + (w / "data.tagd") +
              " --example-index 3 --iterations 3 --ablate-group 1 --out-dir " + (w / "viz")) ==
          0);
  for (int i = 1; i <= 3; ++i) {
    CHECK(fs::exists(w / ("viz/iter_" + std::to_string(i) + ".png")));
  }
  CHECK(fs::exists(w / "viz/ablate_g1.png"));
  // 2K+2 panels of 20x20 at scale 4 with 2px gutters.
  PngHeader h = png_header(w / "viz/iter_1.png");
  std::size_t panels = 2 * 4 + 2;
  CHECK(h.width == panels * 20 * 4 + (panels - 1) * 2);
  CHECK(h.height == 20 * 4);

  CHECK(run("visualize --checkpoint " + (w / "ckpt.tagd") + " --data " + (w / "data.tagd") +
            " --example-index 999 --out-dir " + (w / "viz2")) == 2);

  // PPM fallback.
  REQUIRE(run("visualize --checkpoint " + (w / "ckpt.tagd") + " --data " + (w / "data.tagd") +
              " --iterations 1 --ppm --out-dir " + (w / "viz3")) == 0);
  std::string ppm = read_file(w / "viz3/iter_1.ppm");
  CHECK(ppm.compare(0, 2, "P6") == 0);
}

TEST_CASE("eval skips AMI with a notice when ground truth is absent") {
  Workdir w;
  write_file(w / "smoke.cfg", kSmokeConfig);
  REQUIRE(run("generate --dataset shapes --count 40 --seed 2 --out " + (w / "d.tagd")) == 0);
  REQUIRE(run("train --config " + (w / "smoke.cfg") + " --data " + (w / "d.tagd") + " --out " +
              (w / "c.tagd")) == 0);

  // Strip the ground-truth labels from a copy of the dataset.
  auto bundle = tagger::data::load_bundle(w / "d.tagd");
  std::fill(bundle.labels.begin(), bundle.labels.end(), std::uint8_t(0));
  tagger::data::save_bundle(w / "unlabeled.tagd", bundle);

  std::string cmd = kCli + " eval --checkpoint " + (w / "c.tagd") + " --data " +
                    (w / "unlabeled.tagd") + " > " + (w / "out.txt") + " 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  std::string out = read_file(w / "out.txt");
  CHECK(out.find("AMI skipped") != std::string::npos);
  CHECK(out.find("ami\t") == std::string::npos);
}

TEST_CASE("train resume and K-conflict handling") {
  Workdir w;
  write_file(w / "smoke.cfg", kSmokeConfig);
  REQUIRE(run("generate --dataset shapes --count 40 --seed 9 --out " + (w / "d.tagd")) == 0);
  REQUIRE(run("train --config " + (w / "smoke.cfg") + " --data " + (w / "d.tagd") + " --out " +
              (w / "c1.tagd")) == 0);
  REQUIRE(run("train --config " + (w / "smoke.cfg") + " --data " + (w / "d.tagd") +
              " --resume " + (w / "c1.tagd") + " --out " + (w / "c2.tagd")) == 0);

  std::string conflicted(kSmokeConfig);
  conflicted.replace(conflicted.find("groups=4"), 8, "groups=2");
  write_file(w / "conflict.cfg", conflicted);
  CHECK(run("train --config " + (w / "conflict.cfg") + " --data " + (w / "d.tagd") +
            " --resume " + (w / "c1.tagd") + " --out " + (w / "c3.tagd")) == 2);
}
