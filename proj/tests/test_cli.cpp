#include "test_helpers.hpp"

#include <sys/wait.h>

#include <cstdio>

#include "dgd/evalfuse.hpp"
#include "dgd/manifest.hpp"
#include "dgd/tensor.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run dgd_run(const std::string& args) {
  const std::string cmd = std::string(DGD_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

const char* kConfig = R"({
  "data": {"identities": 8, "images_per_identity": 2, "noise": 20, "seed": 5,
           "eval_identities": 4, "eval_images_per_identity": 3, "eval_positive_pairs": 6, "eval_negative_pairs": 6},
  "head": {"branch_dim": 8},
  "stage1": {"epochs": 2, "batch_P": 4, "batch_K": 2},
  "stage2": {"epochs": 1, "batch_P": 4, "batch_K": 2},
  "eval": {"tta": {"views": [{"kind": "identity"}, {"kind": "scale", "size": 96}]}}
})";

struct Workspace {
  fs::path dir, cfg, data;
  Workspace() {
    dir = testing::temp_dir("cli");
    cfg = dir / "cfg.json";
    data = dir / "data";
    testing::write_bytes(cfg, kConfig);
    const auto r = dgd_run("gen-synth --config " + cfg.string() + " --out " + data.string());
    INFO(r.out);
    REQUIRE(r.code == 0);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("gen-synth writes images and balanced manifests") {
  auto& w = ws();
  const auto train = dgd::parse_train_manifest(testing::read_bytes(w.data / "train.csv"));
  CHECK(train.image_count() == 16);
  const auto pairs = dgd::parse_pair_manifest(testing::read_bytes(w.data / "val_pairs.csv"));
  CHECK(pairs.pairs.size() == 12);
  CHECK(std::count_if(pairs.pairs.begin(), pairs.pairs.end(), [](auto& x) { return x.label == 1; }) == 6);
  int pgm = 0;
  for (auto& e : fs::directory_iterator(w.data)) {
    if (e.path().extension() != ".pgm") continue;
    ++pgm;
    CHECK(testing::read_bytes(e.path()).rfind("P5", 0) == 0);
  }
  CHECK(pgm == 16 + 12);

  const auto again = w.dir / "again";
  REQUIRE(dgd_run("gen-synth --config " + w.cfg.string() + " --out " + again.string()).code == 0);
  for (auto& e : fs::directory_iterator(w.data))
    CHECK(testing::read_bytes(e.path()) == testing::read_bytes(again / e.path().filename()));
}

TEST_CASE("config and usage errors") {
  auto& w = ws();
  testing::write_bytes(w.dir / "bad.json", "{ nope");
  CHECK(dgd_run("gen-synth --config " + w.p("bad.json")).code == 2);
  CHECK(dgd_run("gen-synth --config " + w.p("missing.json")).code == 2);
  CHECK(dgd_run("train --config " + w.cfg.string() + " --stage 2 --out x.dgck").code == 3);
  CHECK(dgd_run("train --config " + w.cfg.string() + " --stage 3 --out x.dgck").code == 3);
  CHECK(dgd_run("frobnicate").code == 3);
  CHECK(dgd_run("").code == 3);
  CHECK(dgd_run("score --emb a").code == 3);
  CHECK(dgd_run("train --help").code == 0);
}

TEST_CASE("train, embed, score, eval-auc, mine, fuse") {
  auto& w = ws();
  const std::string train = w.data.string() + "/train.csv";
  auto r = dgd_run("train --config " + w.cfg.string() + " --stage 1 --train " + train + " --out " + w.p("s1.dgck"));
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("epoch,lr,mean_loss\n1,", 0) == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 3);

  r = dgd_run("train --config " + w.cfg.string() + " --stage 2 --train " + train + " --init " + w.p("s1.dgck") +
              " --out " + w.p("s2.dgck"));
  REQUIRE(r.code == 0);

  // resumed stage one equals the uninterrupted run
  testing::write_bytes(w.dir / "short.json", std::string(kConfig).replace(std::string(kConfig).find("\"epochs\": 2"), 11, "\"epochs\": 1, \"t_max\": 1"));
  REQUIRE(dgd_run("train --config " + w.p("short.json") + " --stage 1 --train " + train + " --out " + w.p("half.dgck")).code == 0);
  REQUIRE(dgd_run("train --config " + w.cfg.string() + " --stage 1 --train " + train + " --init " + w.p("half.dgck") +
                  " --resume --out " + w.p("resumed.dgck")).code == 0);
  CHECK(testing::read_bytes(w.dir / "resumed.dgck") == testing::read_bytes(w.dir / "s1.dgck"));

  const std::string val = w.data.string() + "/val_images.txt";
  REQUIRE(dgd_run("embed --ckpt " + w.p("s1.dgck") + " --images " + val + " --out " + w.p("e.dgt")).code == 0);
  const auto e = dgd::read_tensor(w.p("e.dgt"));
  CHECK(e.dims == std::vector<std::uint64_t>{12, 16});
  CHECK(testing::read_bytes(w.dir / "e.dgt.paths.csv").rfind("index,path\n0,", 0) == 0);

  REQUIRE(dgd_run("embed --ckpt " + w.p("s1.dgck") + " --images " + val + " --no-fc --out " + w.p("n.dgt")).code == 0);
  CHECK(dgd::read_tensor(w.p("n.dgt")).dims == std::vector<std::uint64_t>{12, 64});

  REQUIRE(dgd_run("embed --ckpt " + w.p("s1.dgck") + " --images " + val + " --tta --config " + w.cfg.string() +
                  " --out " + w.p("t.dgt")).code == 0);
  CHECK(dgd::read_tensor(w.p("t.dgt")).dims == std::vector<std::uint64_t>{12, 2, 16});

  const std::string pairs = w.data.string() + "/val_pairs.csv";
  REQUIRE(dgd_run("score --emb " + w.p("e.dgt") + " --pairs " + pairs + " --out " + w.p("s.csv")).code == 0);
  REQUIRE(dgd_run("score --emb " + w.p("t.dgt") + " --pairs " + pairs + " --tta-mode mean_emb --out " + w.p("ts.csv")).code == 0);
  const auto scores = dgd::parse_scores(testing::read_bytes(w.dir / "s.csv"));
  REQUIRE(scores.size() == 12);

  r = dgd_run("eval-auc --scores " + w.p("s.csv"));
  REQUIRE(r.code == 0);
  char expect[32];
  std::snprintf(expect, sizeof expect, "auc=%.6f\n", dgd::auc(scores));
  CHECK(r.out == expect);

  REQUIRE(dgd_run("fuse --inputs " + w.p("s.csv") + " --out " + w.p("f1.csv")).code == 0);
  CHECK(testing::read_bytes(w.dir / "f1.csv") == testing::read_bytes(w.dir / "s.csv"));
  REQUIRE(dgd_run("fuse --inputs " + w.p("s.csv") + " " + w.p("ts.csv") + " --weights 3 1 --out " + w.p("f2.csv")).code == 0);
  testing::write_bytes(w.dir / "weights.json", R"({"eval": {"fusion_weights": [3, 1], "tta_mode": "mean_emb"}})");
  REQUIRE(dgd_run("fuse --inputs " + w.p("s.csv") + " " + w.p("ts.csv") + " --config " + w.p("weights.json") + " --out " + w.p("f4.csv")).code == 0);
  CHECK(testing::read_bytes(w.dir / "f4.csv") == testing::read_bytes(w.dir / "f2.csv"));
  REQUIRE(dgd_run("score --emb " + w.p("t.dgt") + " --pairs " + pairs + " --config " + w.p("weights.json") + " --out " + w.p("ts2.csv")).code == 0);
  CHECK(testing::read_bytes(w.dir / "ts2.csv") == testing::read_bytes(w.dir / "ts.csv"));
  CHECK(dgd_run("fuse --inputs " + w.p("s.csv") + " " + w.p("ts.csv") + " --weights 1 --out " + w.p("f3.csv")).code == 8);
  CHECK(!fs::exists(w.dir / "f3.csv"));

  REQUIRE(dgd_run("mine-pseudo --scores " + w.p("s.csv") + " --k 0 --out " + w.p("m0.csv")).code == 0);
  CHECK(testing::read_bytes(w.dir / "m0.csv") == "dog_id,image\n");
  REQUIRE(dgd_run("mine-pseudo --scores " + w.p("s.csv") + " --k 3 --train " + train + " --out " + w.p("m3.csv")).code == 0);
  const auto mined = dgd::parse_train_manifest(testing::read_bytes(w.dir / "m3.csv"));
  CHECK(!mined.groups.empty());
  CHECK(mined.groups.begin()->first == 8);
  CHECK(dgd_run("mine-pseudo --scores " + w.p("s.csv") + " --k 13 --out " + w.p("m13.csv")).code == 7);

  // unlabeled scores cannot be evaluated
  testing::write_bytes(w.dir / "u.csv", "index,imageA,imageB,score\n0,a,b,0.5\n");
  CHECK(dgd_run("eval-auc --scores " + w.p("u.csv")).code == 6);
}

TEST_CASE("io and score errors") {
  auto& w = ws();
  testing::write_bytes(w.dir / "list.txt", "0008_00.pgm\nghost.pgm\n");
  fs::copy_file(w.data / "0008_00.pgm", w.dir / "0008_00.pgm", fs::copy_options::overwrite_existing);
  REQUIRE(fs::exists(w.dir / "s1.dgck"));
  const auto r = dgd_run("embed --ckpt " + w.p("s1.dgck") + " --images " + w.p("list.txt") + " --out " + w.p("g.dgt"));
  CHECK(r.code == 4);
  CHECK(r.out.find("ghost.pgm") != std::string::npos);
  CHECK(!fs::exists(w.dir / "g.dgt"));

  testing::write_bytes(w.dir / "ghost_pairs.csv", "imageA,imageB\n0008_00.pgm,ghost.pgm\n");
  CHECK(dgd_run("score --emb " + w.p("e.dgt") + " --pairs " + w.p("ghost_pairs.csv") + " --out " + w.p("x.csv")).code == 5);
  CHECK(dgd_run("score --emb " + w.p("nope.dgt") + " --pairs " + w.p("ghost_pairs.csv") + " --out " + w.p("x.csv")).code == 4);
  CHECK(!fs::exists(w.dir / "x.csv"));
}
