#include "test_helpers.hpp"

#include "dgd/config.hpp"

using namespace dgd;

TEST_CASE("empty object keeps defaults") {
  const auto rc = parse_run_config("{}");
  CHECK(rc.data_dir == "data");
  CHECK(rc.data.synth.identities == 50);
  CHECK(rc.data.synth.images_per_identity == 4);
  CHECK(rc.data.eval_positive_pairs == 100);
  CHECK(rc.stage1.epochs == 30);
  CHECK(rc.stage2.lr_max == 3e-5);
  CHECK(rc.stage1.loss.tau == 0.07);
  CHECK(rc.eval.tta.views.size() == 5);
  CHECK(rc.eval.tta_mode == TtaMode::MeanSim);
  CHECK(rc.head.branch_a.kind == PoolSpec::Kind::Spoc);
}

TEST_CASE("sections override fields") {
  const auto rc = parse_run_config(R"({
    "paths": {"data_dir": "d", "output_dir": "o"},
    "data": {"identities": 10, "images_per_identity": 2, "seed": 9, "frequency": [3, 30], "noise": 5,
             "jitter": {"rotation": 0.1}},
    "extractor": {"seed": 4, "k1": 8, "k2": 12},
    "head": {"branch_dim": 32, "branch_a": "gem", "p_a": 4.5, "branch_b": "mac", "cgd_order": true},
    "profiles": {"custom": {"small_resize_prob": 0.2, "small_sizes": [40, 80]}},
    "loss": {"tau": 0.1, "lambda_ce": 1},
    "stage1": {"epochs": 10, "augment": "custom", "seed": 3},
    "stage2": {"epochs": 5, "t_max": 2, "loss": {"lambda_cr": 10}},
    "eval": {"tta_mode": "mean_emb", "tta": {"views": [{"kind": "identity"}, {"kind": "scale", "size": 112},
             {"kind": "crop", "fraction": [0.7, 0.8]}, {"kind": "contrast", "alpha": [0.9, 1.1]}]},
             "use_ema": false, "fusion_weights": [2, 1]}
  })");
  CHECK(rc.data_dir == "d");
  CHECK(rc.output_dir == "o");
  CHECK(rc.data.synth.identities == 10);
  CHECK(rc.data.synth.seed == 9);
  CHECK(rc.data.synth.frequency == std::pair{3.0, 30.0});
  CHECK(rc.data.synth.jitter.rotation == 0.1);
  CHECK(rc.extractor.k2 == 12);
  CHECK(rc.head.branch_dim == 32);
  CHECK(rc.head.branch_a.kind == PoolSpec::Kind::Gem);
  CHECK(rc.head.branch_a.p == 4.5);
  CHECK(rc.head.cgd_order);
  CHECK(rc.stage1.epochs == 10);
  CHECK(rc.stage1.t_max == 9);
  CHECK(rc.stage1.augment.small_sizes == std::vector<int>{40, 80});
  CHECK(rc.stage1.loss.tau == 0.1);
  CHECK(rc.stage1.loss.lambda_ce == 1);
  CHECK(rc.stage2.t_max == 2);
  CHECK(rc.stage2.loss.lambda_cr == 10);
  CHECK(rc.stage2.loss.tau == 0.1);
  CHECK(rc.stage2.augment.name == "stage2");
  CHECK(rc.eval.tta_mode == TtaMode::MeanEmb);
  REQUIRE(rc.eval.tta.views.size() == 4);
  CHECK(rc.eval.tta.views[1].scale_size == 112);
  CHECK(rc.eval.tta.views[2].range == std::pair{0.7, 0.8});
  CHECK(!rc.eval.use_ema);
  CHECK(rc.eval.fusion_weights == std::vector<double>{2, 1});
}

TEST_CASE("invalid configs") {
  for (const char* text : {"{", "[1,2]", R"({"stage1": {"epochs": "ten"}})", R"({"stage1": {"epochs": 0}})",
                           R"({"stage1": {"augment": "nope"}})", R"({"head": {"branch_a": "max"}})",
                           R"({"loss": {"tau": 0}})", R"({"eval": {"tta_mode": "median"}})",
                           R"({"eval": {"tta": {"views": []}}})", R"({"profiles": {"p": {"blur_lengths": [2]}}})",
                           R"({"data": {"frequency": [1]}})", R"({"data": {"eval_positive_pairs": 100000}})"}) {
    INFO(text);
    bool ok = false;
    try {
      parse_run_config(text);
    } catch (const Error& e) {
      ok = e.code() == Errc::InvalidConfig || e.code() == Errc::BadTemperature;
    }
    CHECK(ok);
  }
  REQUIRE_ERRC(parse_run_config(R"({"head": {"branch_a": "gem", "p_a": 0.5}})"), Errc::BadExponent);
  REQUIRE_ERRC(load_run_config("/nonexistent/cfg.json"), Errc::Io);
}

TEST_CASE("load_run_config reads a file") {
  const auto dir = testing::temp_dir("config");
  testing::write_bytes(dir / "c.json", R"({"paths": {"data_dir": "elsewhere"}})");
  CHECK(load_run_config((dir / "c.json").string()).data_dir == "elsewhere");
}
