#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "stn/errors.hpp"
#include "stn/gradcheck.hpp"
#include "stn/refine.hpp"
#include "stn/training.hpp"
#include "stn/visualize.hpp"

namespace stn::cli {

namespace fs = std::filesystem;

namespace {

// Resolved configuration: the subcommand plus every flag value.
struct Resolved {
  std::string command;
  std::vector<std::pair<std::string, std::string>> flags;

  void add(const std::string& key, const std::string& value) { flags.emplace_back(key, value); }
  template <class T>
  void add(const std::string& key, T value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    flags.emplace_back(key, os.str());
  }

  void write(const fs::path& path) const {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << "command=" << command << '\n';
    for (const auto& [k, v] : flags) f << k << '=' << v << '\n';
  }
};

std::vector<std::string> replay_args(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  std::vector<std::string> args;
  std::string line, command;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("replay", "malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "command") {
      command = value;
      continue;
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  if (command.empty()) throw CLI::ValidationError("replay", "no command= line in " + path.string());
  args.insert(args.begin(), command);
  return args;
}

fs::path sibling(const fs::path& file, const std::string& suffix) { return fs::path(file.string() + suffix); }

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spotlighted transcription of glyphlang images", "stn"};
  app.require_subcommand(1);
  app.fallthrough();

  int workers = 1;
  app.add_option("--workers", workers, "Gradient worker threads")->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a glyphlang dataset");
  int gen_count = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--count", gen_count, "Number of pairs")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Supervised training");
  TrainConfig tc;
  std::string variant = "stnr", train_out;
  train->add_option("--data", tc.data_dir, "Dataset directory")->envname("STN_DATA_DIR")->required();
  train->add_option("--variant", variant, "stnm | stnr | ablation-no-spotlight")
      ->check(CLI::IsMember({"stnm", "stnr", "ablation-no-spotlight"}));
  train->add_option("--epochs", tc.epochs, "Epoch budget")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tc.seed, "Seed");
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--lr", tc.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--l2", tc.l2, "L2 coefficient")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", tc.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--patience", tc.patience, "Early-stop patience (0 disables)")->check(CLI::NonNegativeNumber);
  train->add_option("--val-fraction", tc.validation_fraction, "Validation fraction (0 validates on the training set)")
      ->check(CLI::Range(0.0, 0.9));

  // refine
  auto* refine = app.add_subcommand("refine", "Actor-critic refinement of a checkpoint");
  std::string refine_ckpt, refine_data, refine_out;
  RefineConfig rc;
  refine->add_option("--ckpt", refine_ckpt, "Supervised checkpoint")->required();
  refine->add_option("--data", refine_data, "Dataset directory")->envname("STN_DATA_DIR")->required();
  refine->add_option("--iters", rc.iterations, "Iterations")->check(CLI::NonNegativeNumber);
  refine->add_option("--seed", rc.seed, "Seed");
  refine->add_option("--out", refine_out, "Refined checkpoint path")->required();
  refine->add_option("--lr", rc.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  refine->add_option("--batch", rc.batch_size, "Rollouts per update")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Greedy-decode accuracy and reward");
  std::string eval_ckpt, eval_data, eval_split = "all";
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->envname("STN_DATA_DIR")->required();
  eval->add_option("--split", eval_split, "all | train | validation")
      ->check(CLI::IsMember({"all", "train", "validation"}));

  // visualize
  auto* vis = app.add_subcommand("visualize", "Write per-step spotlight overlays");
  std::string vis_ckpt, vis_image, vis_out;
  vis->add_option("--ckpt", vis_ckpt, "Checkpoint")->required();
  vis->add_option("--image", vis_image, "Input PGM image")->required();
  vis->add_option("--out", vis_out, "Output directory")->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check on a toy instance");
  std::uint64_t grad_seed = 1;
  grad->add_option("--seed", grad_seed, "Seed for parameters and sampled coordinates");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run a command from its resolved config file");
  std::string replay_path;
  replay->add_option("config", replay_path, "run_config file")->required();

  if (!args.empty() && !args.front().starts_with("-") && !app.get_subcommand_no_throw(args.front())) {
    err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return kExitUsage;
  }

  std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 takes reversed vectors
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*replay) {
      std::vector<std::string> again = replay_args(replay_path);
      return run(again, out, err);
    }

    if (*gen) {
      const Dataset data = dataset_generate(gen_count, gen_seed);
      dataset_write(data, gen_out);
      Resolved r{"gen-data", {}};
      r.add("count", gen_count);
      r.add("seed", gen_seed);
      r.add("out", gen_out);
      r.write(fs::path(gen_out) / "run_config.txt");
      out << "wrote " << data.size() << " pairs to " << gen_out << '\n';
      return kExitOk;
    }

    if (*train) {
      tc.variant = variant_from_name(variant);
      tc.workers = workers;
      const Dataset data = dataset_read(tc.data_dir);
      const fs::path ckpt(train_out);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      Resolved r{"train", {}};
      r.add("data", tc.data_dir);
      r.add("variant", variant);
      r.add("epochs", tc.epochs);
      r.add("seed", tc.seed);
      r.add("out", train_out);
      r.add("lr", tc.learning_rate);
      r.add("l2", tc.l2);
      r.add("batch", tc.batch_size);
      r.add("patience", tc.patience);
      r.add("val-fraction", tc.validation_fraction);
      r.add("workers", workers);
      r.write(sibling(ckpt, ".run_config.txt"));
      TrainResult result = train_supervised(tc, data, sibling(ckpt, ".metrics.csv"), [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << " train_loss=" << m.train_loss << " val_loss=" << m.val_loss
            << " val_token_acc=" << m.val_token_acc << std::endl;
      });
      save_checkpoint(result.store, ckpt);
      out << "best epoch " << result.best_epoch << "; checkpoint " << ckpt.string() << '\n';
      return kExitOk;
    }

    if (*refine) {
      ParameterStore store = load_checkpoint(refine_ckpt);
      const Dataset data = dataset_read(refine_data);
      const fs::path ckpt(refine_out);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      Resolved r{"refine", {}};
      r.add("ckpt", refine_ckpt);
      r.add("data", refine_data);
      r.add("iters", rc.iterations);
      r.add("seed", rc.seed);
      r.add("out", refine_out);
      r.add("lr", rc.learning_rate);
      r.add("batch", rc.batch_size);
      r.write(sibling(ckpt, ".run_config.txt"));
      RefineResult result = refine_loop(std::move(store), data, rc, sibling(ckpt, ".rewards.csv"),
                                        [&](const RewardPoint& p) {
                                          if (p.iteration % 10 == 0)
                                            out << "iteration " << p.iteration << " mean_reward=" << p.mean_reward
                                                << " compile_rate=" << p.compile_rate
                                                << " value_loss=" << p.value_loss << std::endl;
                                        });
      save_checkpoint(result.store, ckpt);
      out << "best iteration " << result.best_iteration << "; checkpoint " << ckpt.string() << '\n';
      return kExitOk;
    }

    if (*eval) {
      const ParameterStore store = load_checkpoint(eval_ckpt);
      const Dataset data = dataset_read(eval_data);
      Accuracy acc;
      if (eval_split == "all") {
        acc = evaluate_accuracy(store.params, data);
      } else {
        KeyValues kv;
        for (const auto& key : {"seed", "validation_fraction"})
          if (store.config.count(key)) kv[key] = store.config.at(key);
        const TrainConfig c = TrainConfig::from_key_values(kv);
        const Split split = split_validation(data.size(), c.validation_fraction, c.seed);
        acc = evaluate_accuracy(store.params, data, eval_split == "train" ? split.train : split.validation);
      }
      out << std::fixed << std::setprecision(4) << "token_accuracy " << acc.token_accuracy << '\n'
          << "sequence_accuracy " << acc.sequence_accuracy << '\n'
          << "mean_reward " << acc.mean_reward << '\n';
      return kExitOk;
    }

    if (*vis) {
      const ParameterStore store = load_checkpoint(vis_ckpt);
      const Image image = read_pgm(vis_image);
      if (image.width != kCanvasWidth || image.height != kCanvasHeight)
        throw ShapeError("visualize expects a " + std::to_string(kCanvasWidth) + "x" +
                         std::to_string(kCanvasHeight) + " image");
      const Visualization v = visualize_spotlights(store.params, image, vis_out);
      Resolved r{"visualize", {}};
      r.add("ckpt", vis_ckpt);
      r.add("image", vis_image);
      r.add("out", vis_out);
      r.write(fs::path(vis_out) / "run_config.txt");
      out << detokenize(v.decode.body()) << '\n' << v.overlays.size() << " overlays in " << vis_out << '\n';
      return kExitOk;
    }

    if (*grad) {
      ParameterStore store;
      bool ok = true;
      for (Variant v : {Variant::Stnm, Variant::Stnr, Variant::NoSpotlight}) {
        store = ParameterStore::create(v);
        glorot_init(store, grad_seed);
        GradCheckOptions options;
        options.seed = grad_seed;
        const GradCheckReport report = gradient_check(store.params, make_toy_instance(grad_seed), options);
        out << "[" << variant_name(v) << "]\n" << format_report(report);
        ok = ok && report.passed;
      }
      return ok ? kExitOk : kExitRuntime;
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace stn::cli
