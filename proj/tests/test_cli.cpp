#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "loupe/cli.hpp"
#include "loupe/dataio.hpp"
#include "loupe/ensemble.hpp"

using namespace loupe;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// Small end-to-end profile shared by the pipeline cases.
const std::initializer_list<std::string> kTinyGen{
    "--set", "gen.videos=120",  "--set", "gen.labels=8",     "--set", "gen.dim_visual=8",
    "--set", "gen.dim_audio=4", "--set", "gen.frames_min=4", "--set", "gen.frames_max=10"};

std::vector<std::string> with_tiny_gen(std::vector<std::string> base) {
  base.insert(base.end(), kTinyGen.begin(), kTinyGen.end());
  return base;
}

std::vector<std::string> tiny_train_args(const std::string& data, const std::string& out,
                                         const std::string& seed) {
  return {"train",  "--data", data,
          "--out",  out,      "--seed",
          seed,     "--set",  "model.hidden=12",
          "--set",  "pooling.clusters=3",
          "--set",  "pooling.sample_count=4",
          "--set",  "train.epochs=2",
          "--set",  "train.batch=10",
          "--set",  "train.lr=0.002",
          "--set",  "train.val_every=5"};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("bad invocations exit with the config code") {
    CHECK(run({}) == 1);
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({"gen", "--nope"}) == 1);
    CHECK(run({"gen", "--set", "unknown.key=1", "--out", "/tmp/x"}) == 1);
    CHECK(run({"gen"}) == 1);                      // missing --out
    CHECK(run({"train", "--out", "/tmp/x"}) == 1); // missing --data
    CHECK(run({"inspect"}) == 1);
  }

  TEST_CASE("missing files exit with the i/o code") {
    TempDir tmp("loupe_cli_io");
    CHECK(run({"train", "--data", tmp / "absent.vseq", "--out", tmp / "o"}) == 2);
    CHECK(run({"inspect", "--checkpoint", tmp / "absent.ckpt"}) == 2);
    CHECK(run({"gen", "--config", tmp / "absent.cfg", "--out", tmp / "o"}) == 2);
  }

  TEST_CASE("gen writes the dataset and a resolved config snapshot") {
    TempDir tmp("loupe_cli_gen");
    auto args = with_tiny_gen({"gen", "--out", tmp / "g", "--seed", "3"});
    CHECK(cli::run(args) == 0);
    CHECK(fs::exists(tmp / "g/dataset.vseq"));
    const auto snapshot = slurp(tmp / "g/config.resolved");
    CHECK(snapshot.find("gen.videos = 120") != std::string::npos);
    CHECK(snapshot.find("seed = 3") != std::string::npos);
    const auto ds = read_vseq(tmp / "g/dataset.vseq");
    CHECK(ds.videos.size() == 120);
    CHECK(ds.meta.label_count == 8);
  }

  TEST_CASE("gen is byte-deterministic in the seed") {
    TempDir tmp("loupe_cli_det");
    auto a1 = with_tiny_gen({"gen", "--out", tmp / "a", "--seed", "5"});
    auto a2 = with_tiny_gen({"gen", "--out", tmp / "b", "--seed", "5"});
    auto a3 = with_tiny_gen({"gen", "--out", tmp / "c", "--seed", "6"});
    CHECK(cli::run(a1) == 0);
    CHECK(cli::run(a2) == 0);
    CHECK(cli::run(a3) == 0);
    CHECK(slurp(tmp / "a/dataset.vseq") == slurp(tmp / "b/dataset.vseq"));
    CHECK(slurp(tmp / "a/dataset.vseq") != slurp(tmp / "c/dataset.vseq"));
  }

  TEST_CASE("config file plus --set overrides feed one run") {
    TempDir tmp("loupe_cli_cfg");
    {
      std::ofstream f(tmp / "exp.cfg");
      f << "# tiny experiment\n";
      f << "gen.videos = 30\n";
      f << "gen.labels = 5\n";
      f << "gen.dim_visual = 6\ngen.dim_audio = 3\n";
      f << "gen.frames_min = 3\ngen.frames_max = 6\n";
    }
    CHECK(run({"gen", "--config", tmp / "exp.cfg", "--out", tmp / "g", "--set",
               "gen.videos=40"}) == 0);
    const auto ds = read_vseq(tmp / "g/dataset.vseq");
    CHECK(ds.videos.size() == 40);  // override wins
    CHECK(ds.meta.label_count == 5);

    std::ofstream bad(tmp / "bad.cfg");
    bad << "no equals sign here\n";
    bad.close();
    CHECK(run({"gen", "--config", tmp / "bad.cfg", "--out", tmp / "g"}) == 1);
  }

  TEST_CASE("gen, train, eval, inspect pipeline") {
    TempDir tmp("loupe_cli_pipe");
    auto gen = with_tiny_gen({"gen", "--out", tmp / "g", "--seed", "11"});
    REQUIRE(cli::run(gen) == 0);
    const std::string data = tmp / "g/dataset.vseq";

    REQUIRE(cli::run(tiny_train_args(data, tmp / "t", "11")) == 0);
    CHECK(fs::exists(tmp / "t/checkpoint.bin"));
    CHECK(fs::exists(tmp / "t/metrics.csv"));
    CHECK(fs::exists(tmp / "t/config.resolved"));

    CHECK(run({"eval", "--checkpoint", tmp / "t/checkpoint.bin", "--data", data, "--out",
               tmp / "e"}) == 0);
    const auto report = slurp(tmp / "e/eval.csv");
    CHECK(report.find("gap@20,") != std::string::npos);

    CHECK(run({"inspect", "--data", data}) == 0);
    CHECK(run({"inspect", "--checkpoint", tmp / "t/checkpoint.bin"}) == 0);
  }

  TEST_CASE("eval rejects a dataset with a different vocabulary") {
    TempDir tmp("loupe_cli_mismatch");
    auto gen = with_tiny_gen({"gen", "--out", tmp / "g", "--seed", "12"});
    REQUIRE(cli::run(gen) == 0);
    REQUIRE(cli::run(tiny_train_args(tmp / "g/dataset.vseq", tmp / "t", "12")) == 0);

    auto other = with_tiny_gen({"gen", "--out", tmp / "g2", "--seed", "12"});
    other.insert(other.end(), {"--set", "gen.labels=9"});
    REQUIRE(cli::run(other) == 0);
    CHECK(run({"eval", "--checkpoint", tmp / "t/checkpoint.bin", "--data",
               tmp / "g2/dataset.vseq", "--out", tmp / "e"}) == 1);
  }

  TEST_CASE("gradcheck command passes and writes its table") {
    TempDir tmp("loupe_cli_gc");
    CHECK(run({"gradcheck", "--seed", "4", "--out", tmp / "gc"}) == 0);
    const auto table = slurp(tmp / "gc/gradcheck.csv");
    CHECK(table.find("full_model") != std::string::npos);
    CHECK(table.find(",0\n") == std::string::npos);  // no failing rows
  }

  TEST_CASE("ensemble command selects members and writes spec plus log") {
    TempDir tmp("loupe_cli_ens");
    auto gen = with_tiny_gen({"gen", "--out", tmp / "g", "--seed", "13"});
    REQUIRE(cli::run(gen) == 0);
    const std::string data = tmp / "g/dataset.vseq";
    REQUIRE(cli::run(tiny_train_args(data, tmp / "m1", "21")) == 0);
    REQUIRE(cli::run(tiny_train_args(data, tmp / "m2", "22")) == 0);

    const std::string members =
        (tmp / "m1/checkpoint.bin") + "," + (tmp / "m2/checkpoint.bin");
    CHECK(run({"ensemble", "--members", members, "--data", data, "--out", tmp / "e",
               "--seed", "13"}) == 0);
    CHECK(fs::exists(tmp / "e/ensemble.spec"));
    const auto log = slurp(tmp / "e/selection.csv");
    CHECK(log.find("rank,checkpoint,val_gap") != std::string::npos);
    const auto spec = load_ensemble_spec(tmp / "e/ensemble.spec");
    CHECK(spec.members.size() >= 1);
  }
}
