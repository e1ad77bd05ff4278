// dgd: command-line front end for the dual-descriptor verification pipeline.
//
// Exit codes: 0 ok, 2 config, 3 usage, 4 io, 5 score, 6 auc, 7 mine, 8 fuse.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgd/checkpoint.hpp"
#include "dgd/config.hpp"
#include "dgd/evalfuse.hpp"
#include "dgd/manifest.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/tensor.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kUsage = 3, kIo = 4, kScore = 5, kAuc = 6, kMine = 7, kFuse = 8 };

struct ExitError {
  int code;
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ExitError{kIo, "cannot read " + path};
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ExitError{kIo, "cannot write " + path};
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ExitError{kIo, "write failed: " + path};
}

// Runs fn, mapping library errors to the command's exit code (config and io
// errors keep their own codes).
template <typename Fn>
int guarded(int command_code, Fn&& fn) {
  try {
    fn();
    return kOk;
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const dgd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case dgd::Errc::InvalidConfig:
      case dgd::Errc::BadExponent:
      case dgd::Errc::BadTemperature: return kConfig;
      case dgd::Errc::Io: return kIo;
      default: return command_code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return command_code;
  }
}

dgd::RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const ExitError& e) {
    throw ExitError{kConfig, e.message};
  }
  try {
    return dgd::parse_run_config(text);
  } catch (const dgd::Error& e) {
    throw ExitError{kConfig, e.what()};
  }
}

// Paths in manifests and lists are relative to the file that names them.
fs::path resolve(const fs::path& listing, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : listing.parent_path() / path;
}

dgd::ImageStore load_images(const fs::path& listing, const std::vector<std::string>& paths) {
  dgd::ImageStore store;
  std::vector<std::string> bad;
  for (const auto& p : paths) {
    try {
      store.emplace(p, dgd::read_image(resolve(listing, p).string()));
    } catch (const dgd::Error& e) {
      bad.push_back(p + " (" + e.what() + ")");
    }
  }
  if (!bad.empty()) {
    std::string msg = "unreadable images:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ExitError{kIo, msg};
  }
  return store;
}

std::vector<std::string> read_list(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream is(read_file(path));
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string sidecar_path(const std::string& emb) { return emb + ".paths.csv"; }

// ---------------------------------------------------------------------------

int cmd_gen_synth(const std::string& config_path, const std::string& out) {
  return guarded(kConfig, [&] {
    const auto cfg = load_config(config_path);
    const std::string out_dir = out.empty() ? cfg.data_dir : out;
    const auto split = dgd::make_synthetic_split(cfg.data);

    std::ostringstream train_csv, pairs_csv, train_list, val_list;
    dgd::write_train_manifest(train_csv, split.train);
    dgd::write_pair_manifest(pairs_csv, split.eval_pairs);
    for (const auto& [id, paths] : split.train.groups)
      for (const auto& p : paths) train_list << p << '\n';
    for (const auto& p : split.eval_paths) val_list << p << '\n';

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ExitError{kIo, "cannot create " + out_dir + ": " + ec.message()};
    const fs::path dir(out_dir);
    for (const auto* store : {&split.train_images, &split.eval_images})
      for (const auto& [name, img] : *store) {
        std::ostringstream os;
        dgd::write_pgm(os, img);
        write_file((dir / name).string(), os.str());
      }
    write_file((dir / "train.csv").string(), train_csv.str());
    write_file((dir / "val_pairs.csv").string(), pairs_csv.str());
    write_file((dir / "train_images.txt").string(), train_list.str());
    write_file((dir / "val_images.txt").string(), val_list.str());
    std::cout << split.train_images.size() + split.eval_images.size() << " images, "
              << split.eval_pairs.pairs.size() << " eval pairs written to " << out_dir << '\n';
  });
}

int cmd_train(const std::string& config_path, int stage, const std::string& init, bool resume,
              const std::string& train_manifest, const std::string& out) {
  if (stage != 1 && stage != 2) {
    std::cerr << "error: --stage must be 1 or 2\n";
    return kUsage;
  }
  if (stage == 2 && init.empty()) {
    std::cerr << "error: stage 2 requires --init\n";
    return kUsage;
  }
  if (resume && init.empty()) {
    std::cerr << "error: --resume requires --init\n";
    return kUsage;
  }
  return guarded(kConfig, [&] {
    const auto cfg = load_config(config_path);
    const auto& stage_cfg = stage == 1 ? cfg.stage1 : cfg.stage2;
    const std::string manifest_path =
        train_manifest.empty() ? (fs::path(cfg.data_dir) / "train.csv").string() : train_manifest;
    const auto manifest = dgd::parse_train_manifest(read_file(manifest_path));
    std::vector<std::string> paths;
    for (const auto& [id, group] : manifest.groups) paths.insert(paths.end(), group.begin(), group.end());
    const auto images = load_images(manifest_path, paths);

    dgd::Checkpoint start = init.empty() ? dgd::fresh_checkpoint(cfg.extractor, cfg.head, cfg.head_seed)
                                         : dgd::load_checkpoint(init);
    const auto bank = dgd::make_filter_bank(start.extractor);
    std::cout << "epoch,lr,mean_loss\n";
    dgd::TrainOptions opts;
    opts.resume = resume;
    opts.log = &std::cout;
    const auto ck = dgd::train_stage(manifest, images, bank, start, stage_cfg, opts);
    std::ostringstream os;
    dgd::save_checkpoint(os, ck);
    write_file(out, os.str());
  });
}

int cmd_embed(const std::string& ckpt_path, const std::string& list_path, const std::string& out, bool no_fc,
              bool tta, bool live, const std::string& config_path) {
  return guarded(kIo, [&] {
    const dgd::EvalConfig eval = config_path.empty() ? dgd::EvalConfig{} : load_config(config_path).eval;
    const auto ck = dgd::load_checkpoint(ckpt_path);
    const auto paths = read_list(list_path);
    if (paths.empty()) throw ExitError{kIo, "image list " + list_path + " is empty"};
    const auto images = load_images(list_path, paths);

    const auto bank = dgd::make_filter_bank(ck.extractor);
    dgd::FeatureCache cache(bank);
    const auto& head = live || !eval.use_ema ? ck.head : ck.ema_head;
    const auto mode = no_fc ? dgd::EmbedMode::NoFc : dgd::EmbedMode::WithFc;

    dgd::TensorRecord rec;
    if (tta) {
      const auto views = dgd::embed_images_tta(images, cache, head, eval.tta, eval.tta_seed, mode);
      const auto v = eval.tta.views.size();
      const auto d = views.begin()->second.front().size();
      rec.dims = {paths.size(), v, static_cast<std::uint64_t>(d)};
      for (const auto& p : paths)
        for (const auto& e : views.at(p)) rec.data.insert(rec.data.end(), e.data(), e.data() + e.size());
    } else {
      const auto table = dgd::embed_images(images, cache, head, mode);
      const auto d = table.begin()->second.size();
      rec.dims = {paths.size(), static_cast<std::uint64_t>(d)};
      for (const auto& p : paths) {
        const auto& e = table.at(p);
        rec.data.insert(rec.data.end(), e.data(), e.data() + e.size());
      }
    }
    std::ostringstream tensor, sidecar;
    dgd::write_tensor(tensor, rec);
    sidecar << "index,path\n";
    for (std::size_t i = 0; i < paths.size(); ++i) sidecar << i << ',' << paths[i] << '\n';
    write_file(out, tensor.str());
    write_file(sidecar_path(out), sidecar.str());
  });
}

int cmd_score(const std::string& emb_path, const std::string& pairs_path, const std::string& out,
              std::string tta_mode, const std::string& config_path) {
  return guarded(kScore, [&] {
    if (tta_mode.empty()) {
      const auto mode = config_path.empty() ? dgd::TtaMode::MeanSim : load_config(config_path).eval.tta_mode;
      tta_mode = mode == dgd::TtaMode::MeanSim ? "mean_sim" : "mean_emb";
    }
    const auto rec = dgd::read_tensor(emb_path);
    const auto side = read_file(sidecar_path(emb_path));
    const auto lines = dgd::csv::split_lines(side);
    std::vector<std::string> paths;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = dgd::csv::split_fields(lines[i]);
      if (f.size() != 2) throw ExitError{kScore, "bad sidecar row " + std::to_string(i)};
      paths.push_back(f[1]);
    }
    if (rec.dims.size() < 2 || rec.dims.size() > 3 || rec.dims[0] != paths.size())
      throw ExitError{kScore, "embedding tensor does not match its sidecar"};
    const auto manifest = dgd::parse_pair_manifest(read_file(pairs_path));

    std::vector<dgd::PairScore> scores;
    const auto d = static_cast<Eigen::Index>(rec.dims.back());
    if (rec.dims.size() == 2) {
      dgd::EmbeddingTable table;
      for (std::size_t i = 0; i < paths.size(); ++i)
        table[paths[i]] = Eigen::Map<const dgd::Vec>(rec.data.data() + i * d, d);
      scores = dgd::score_pairs(table, manifest);
    } else {
      dgd::TtaMode mode;
      if (tta_mode == "mean_sim") mode = dgd::TtaMode::MeanSim;
      else if (tta_mode == "mean_emb") mode = dgd::TtaMode::MeanEmb;
      else throw ExitError{kUsage, "unknown --tta-mode " + tta_mode};
      const auto v = rec.dims[1];
      dgd::ViewEmbeddingTable table;
      for (std::size_t i = 0; i < paths.size(); ++i)
        for (std::size_t k = 0; k < v; ++k)
          table[paths[i]].push_back(Eigen::Map<const dgd::Vec>(rec.data.data() + (i * v + k) * d, d));
      scores = dgd::tta_score(table, manifest, mode);
    }
    std::ostringstream os;
    dgd::write_scores(os, scores);
    write_file(out, os.str());
  });
}

int cmd_eval_auc(const std::string& scores_path) {
  return guarded(kAuc, [&] {
    const auto scores = dgd::parse_scores(read_file(scores_path));
    std::cout << dgd::format_auc(dgd::auc(scores)) << '\n';
  });
}

int cmd_mine(const std::string& scores_path, long long k, const std::string& train_path, long long first_id,
             const std::string& out) {
  return guarded(kMine, [&] {
    if (k < 0) throw ExitError{kMine, "--k must be >= 0"};
    const auto scores = dgd::parse_scores(read_file(scores_path));
    std::int64_t first = first_id;
    if (!train_path.empty()) first = std::max<std::int64_t>(first, dgd::parse_train_manifest(read_file(train_path)).next_id());
    const auto groups = dgd::mine_pseudo(scores, static_cast<std::size_t>(k), first);
    std::ostringstream os;
    dgd::write_train_manifest(os, groups);
    write_file(out, os.str());
  });
}

int cmd_fuse(const std::vector<std::string>& inputs, std::vector<double> weights, const std::string& out,
             const std::string& config_path) {
  return guarded(kFuse, [&] {
    if (weights.empty() && !config_path.empty()) weights = load_config(config_path).eval.fusion_weights;
    std::vector<std::vector<dgd::PairScore>> all;
    for (const auto& p : inputs) all.push_back(dgd::parse_scores(read_file(p)));
    std::ostringstream os;
    dgd::write_scores(os, dgd::fuse(all, weights));
    write_file(out, os.str());
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual global descriptor pair verification"};
  app.require_subcommand(1);

  std::string config, out, init, train_manifest, ckpt, images, emb, pairs, scores, tta_mode;
  int stage = 1;
  bool resume = false, no_fc = false, tta = false, live = false;
  long long k = 0, first_id = 0;
  std::vector<std::string> inputs;
  std::vector<double> weights;

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic train set and held-out pair manifest");
  gen->add_option("--config", config, "Run config (JSON)")->required();
  gen->add_option("--out", out, "Output directory (default: paths.data_dir)");

  auto* train = app.add_subcommand("train", "Train the descriptor head for one stage");
  train->add_option("--config", config, "Run config (JSON)")->required();
  train->add_option("--stage", stage, "1 or 2")->required();
  train->add_option("--train", train_manifest, "Train manifest (default: <paths.data_dir>/train.csv)");
  train->add_option("--init", init, "Checkpoint to start from (required for stage 2)");
  train->add_flag("--resume", resume, "Continue the --init checkpoint's own stage");
  train->add_option("--out", out, "Output checkpoint")->required();

  auto* embed = app.add_subcommand("embed", "Embed a list of images");
  embed->add_option("--ckpt", ckpt, "Checkpoint")->required();
  embed->add_option("--images", images, "Text file, one image path per line")->required();
  embed->add_option("--out", out, "Output DGT1 tensor; a .paths.csv sidecar is written next to it")->required();
  embed->add_flag("--no-fc", no_fc, "Drop the projection layers (concatenated normalised pools)");
  embed->add_flag("--tta", tta, "Embed every test-time view: output [N, V, D]");
  embed->add_flag("--live", live, "Use the live weights instead of the EMA shadow");
  embed->add_option("--config", config, "Run config supplying the TTA recipe");

  auto* score = app.add_subcommand("score", "Cosine-score a pair manifest");
  score->add_option("--emb", emb, "Embedding tensor from `embed`")->required();
  score->add_option("--pairs", pairs, "Pair manifest (imageA,imageB[,label])")->required();
  score->add_option("--out", out, "Output score CSV")->required();
  score->add_option("--tta-mode", tta_mode, "mean_sim or mean_emb (TTA tensors only; default eval.tta_mode)");
  score->add_option("--config", config, "Run config supplying eval.tta_mode");

  auto* eval = app.add_subcommand("eval-auc", "Print the ROC-AUC of a labelled score file");
  eval->add_option("--scores", scores, "Score CSV")->required();

  auto* mine = app.add_subcommand("mine-pseudo", "Turn the top-K scored pairs into pseudo identities");
  mine->add_option("--scores", scores, "Score CSV")->required();
  mine->add_option("--k", k, "Number of pairs to promote")->required();
  mine->add_option("--train", train_manifest, "Existing train manifest; new ids start after its largest id");
  mine->add_option("--first-id", first_id, "Smallest id for new groups");
  mine->add_option("--out", out, "Output train manifest (dog_id,image)")->required();

  auto* fuse = app.add_subcommand("fuse", "Weighted mean of several score files");
  fuse->add_option("--inputs", inputs, "Score CSVs over the same pair manifest")->required();
  fuse->add_option("--weights", weights, "One weight per input (default eval.fusion_weights, else uniform)");
  fuse->add_option("--config", config, "Run config supplying eval.fusion_weights");
  fuse->add_option("--out", out, "Output score CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (gen->parsed()) return cmd_gen_synth(config, out);
  if (train->parsed()) return cmd_train(config, stage, init, resume, train_manifest, out);
  if (embed->parsed()) return cmd_embed(ckpt, images, out, no_fc, tta, live, config);
  if (score->parsed()) return cmd_score(emb, pairs, out, tta_mode, config);
  if (eval->parsed()) return cmd_eval_auc(scores);
  if (mine->parsed()) return cmd_mine(scores, k, train_manifest, first_id, out);
  if (fuse->parsed()) return cmd_fuse(inputs, weights, out, config);
  return kUsage;
}
