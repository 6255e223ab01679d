// uodkit: enhancement, validation suites, synthetic data, toy training,
// evaluation and ablation from one binary.
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "uodkit/cli/config.hpp"
#include "uodkit/eval/evaluate.hpp"
#include "uodkit/io/params_io.hpp"
#include "uodkit/toydet/train.hpp"
#include "uodkit/validation/gradient_suite.hpp"
#include "uodkit/validation/loss_examples.hpp"

namespace fs = std::filesystem;
using namespace uodkit;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kFailed = 1, kUsage = 2;

struct Args {
  std::vector<std::string> argv;

  // enhance
  std::string in, out, dump_dir, config;
  unsigned threads = 1;
  // gradcheck
  int seed = -1;
  double tol = 1e-5;
  std::string corrupt;
  // synth
  std::size_t n = 0;
  std::uint64_t data_seed = 0;
  bool degrade = false;
  // train / ablate / eval
  std::string data, pred, gt;
  bool dpsa = false, fgiou = false, enhance = false;
  int epochs = 30;
  std::uint64_t train_seed = 0;
  double iou = 0.5;
};

fs::path sibling_manifest(const fs::path& out) { return out.parent_path() / (out.stem().string() + ".manifest.json"); }

cli::RunManifest start_manifest(const std::string& command, const Args& a) {
  cli::RunManifest m;
  m.command = command;
  m.argv = a.argv;
  m.started = cli::utc_now();
  return m;
}

int run_enhance(const Args& a) {
  EnhanceConfig cfg;
  if (!a.config.empty()) cfg = cli::from_json(cli::read_json_file(a.config), cfg);
  auto manifest = start_manifest("enhance", a);
  manifest.config = cli::to_json(cfg);
  const ImageF32 img = read_image(a.in);
  std::vector<ImageF32> stages;
  const ImageF32 out = enhance_pipeline(img, cfg, a.threads, a.dump_dir.empty() ? nullptr : &stages);
  write_image(a.out, out);
  if (!a.dump_dir.empty()) {
    fs::create_directories(a.dump_dir);
    const char* names[] = {"1_color.png", "2_clahe.png", "3_dehaze.png", "4_refine.png"};
    for (std::size_t i = 0; i < stages.size(); ++i) write_image(fs::path(a.dump_dir) / names[i], stages[i]);
  }
  manifest.write(sibling_manifest(a.out));
  std::printf("wrote %s (%zux%zu)\n", a.out.c_str(), out.width, out.height);
  return kOk;
}

int run_gradcheck(const Args& a) {
  validation::GradientHook hook;
  if (!a.corrupt.empty())
    hook = [&](const std::string& name, Tensor<double>& g) {
      if (name == a.corrupt && g.size() > 0) g[0] = g[0] * 1.01 + 1e-3;
    };
  const int first = a.seed < 0 ? 0 : a.seed;
  const int count = a.seed < 0 ? 20 : 1;
  const auto report = validation::run_gradient_suite(count, a.tol, hook, first);
  std::map<std::string, double> worst;
  std::vector<std::string> order;
  for (const auto& e : report.entries) {
    if (!worst.count(e.name)) order.push_back(e.name);
    worst[e.name] = std::max(worst[e.name], e.max_rel_error);
  }
  for (const auto& name : order)
    std::printf("%-4s %-40s max rel error %.3e\n", worst[name] < a.tol ? "ok" : "FAIL", name.c_str(), worst[name]);
  std::printf("gradcheck: %zu checks over %d seed(s), worst %.3e, tol %.1e: %s\n", report.entries.size(), count,
              report.worst(), a.tol, report.passed() ? "PASS" : "FAIL");
  return report.passed() ? kOk : kFailed;
}

int run_losscheck() {
  bool all = true;
  for (const auto& e : validation::all_loss_examples()) {
    std::printf("%-4s %-52s got %.9g expected %.9g\n", e.passed() ? "ok" : "FAIL", e.name.c_str(), e.value,
                e.expected);
    all = all && e.passed();
  }
  std::printf("losscheck: %s\n", all ? "PASS" : "FAIL");
  return all ? kOk : kFailed;
}

int run_synth(const Args& a) {
  auto manifest = start_manifest("synth", a);
  manifest.config = {{"n", a.n}, {"degrade", a.degrade}};
  manifest.seeds = {{"data", a.data_seed}};
  write_dataset(a.out, toydet::make_dataset(a.n, a.data_seed, a.degrade));
  manifest.write(fs::path(a.out) / "manifest.json");
  std::printf("wrote %zu images to %s\n", a.n, a.out.c_str());
  return kOk;
}

bool given(const CLI::App& sub, const std::string& flag) {
  const CLI::Option* opt = sub.get_option_no_throw(flag);
  return opt != nullptr && opt->count() > 0;
}

toydet::TrainConfig train_config(const Args& a, const CLI::App& sub) {
  toydet::TrainConfig cfg;
  cfg.seed = a.train_seed;
  cfg.use_dpsa = false;
  cfg.use_fgiou = false;
  if (!a.config.empty()) cfg = cli::from_json(cli::read_json_file(a.config), cfg);
  // Flags given on the command line win over the config file.
  if (given(sub, "--seed")) cfg.seed = a.train_seed;
  if (given(sub, "--epochs")) cfg.epochs = a.epochs;
  if (given(sub, "--enhance")) cfg.use_enhance = true;
  if (given(sub, "--dpsa")) cfg.use_dpsa = true;
  if (given(sub, "--fgiou")) cfg.use_fgiou = true;
  return cfg;
}

json log_json(const toydet::EpochLog& l) {
  return {{"epoch", l.epoch}, {"loss", l.loss},         {"giou", l.giou},           {"focal", l.focal},
          {"obj_focal", l.obj_focal}, {"map50", l.map50}, {"map50_95", l.map50_95}, {"lr", l.lr}};
}

int run_train(const Args& a, const CLI::App& sub) {
  const toydet::TrainConfig cfg = train_config(a, sub);
  auto manifest = start_manifest("train", a);
  manifest.config = cli::to_json(cfg);
  manifest.seeds = {{"train", cfg.seed}};
  const auto data = read_dataset(a.data);
  const fs::path run(a.out);
  fs::create_directories(run);
  std::ofstream log(run / "log.jsonl");
  if (!log) throw IoError("cannot write " + (run / "log.jsonl").string());
  auto result = toydet::train_toy(cfg, data, [&](const toydet::EpochLog& l) {
    log << log_json(l).dump() << '\n' << std::flush;
    std::printf("epoch %3d  loss %.4f  giou %.4f  focal %.4f  obj %.4f  mAP50 %.4f  mAP50:95 %.4f\n", l.epoch, l.loss,
                l.giou, l.focal, l.obj_focal, l.map50, l.map50_95);
    std::fflush(stdout);
  });
  // The validation split as its own dataset, so `eval --gt RUN/val` scores
  // exactly what training scored.
  std::vector<LabeledImage> val;
  for (std::size_t i : result.split.val) val.push_back(data[i]);
  write_dataset(run / "val", val);
  write_predictions(run / "preds.jsonl", result.val_predictions);
  save_params(run / "params.bin", collect_params<float>(result.params, "net"),
              {{"config", manifest.config}, {"version", cli::kVersion}});
  manifest.write(run / "manifest.json");
  std::printf("final mAP50 %.4f mAP50:95 %.4f%s\n", result.log.back().map50, result.log.back().map50_95,
              result.stopped_early ? " (stopped early)" : "");
  return kOk;
}

int run_eval(const Args& a) {
  const auto s = evaluate_records(read_predictions(a.pred), read_annotations(a.gt), a.iou);
  const json j{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
               {"map50", s.map50},         {"map50_95", s.map50_95}, {"tp", s.tp},
               {"fp", s.fp},               {"fn", s.fn},             {"num_classes", s.num_classes},
               {"iou", a.iou}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int run_ablate(const Args& a, const CLI::App& sub) {
  const toydet::TrainConfig cfg = train_config(a, sub);
  auto manifest = start_manifest("ablate", a);
  manifest.config = cli::to_json(cfg);
  manifest.seeds = {{"train", cfg.seed}};
  const auto data = read_dataset(a.data);
  const auto rows = toydet::ablate(cfg, data, [](const toydet::AblationRow& r) {
    std::printf("%-9s mAP50 %.4f  mAP50:95 %.4f\n", r.name.c_str(), r.map50, r.map50_95);
    std::fflush(stdout);
  });
  const std::string md = toydet::ablation_markdown(rows);
  std::ofstream out(a.out);
  if (!out) throw IoError("cannot write " + a.out);
  out << md;
  manifest.write(sibling_manifest(a.out));
  std::cout << md;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  a.argv.assign(argv, argv + argc);

  CLI::App app{"uodkit: underwater image enhancement and toy detection toolkit"};
  app.set_version_flag("--version", cli::kVersion);
  app.require_subcommand(1);

  auto* enhance = app.add_subcommand("enhance", "Run the four-stage enhancement pipeline on one image");
  enhance->add_option("in", a.in, "Input image (.png or .ppm)")->required()->check(CLI::ExistingFile);
  enhance->add_option("out", a.out, "Output image (.png or .ppm)")->required();
  enhance->add_option("--dump-stages", a.dump_dir, "Write each stage's output to this directory");
  enhance->add_option("--config", a.config, "JSON file overriding enhancement parameters")->check(CLI::ExistingFile);
  enhance->add_option("--threads", a.threads, "Worker threads")->check(CLI::Range(1u, 256u));

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  gradcheck->add_option("--seed", a.seed, "Check only this seed (default: seeds 0-19)")->check(CLI::NonNegativeNumber);
  gradcheck->add_option("--tol", a.tol, "Max relative error")->check(CLI::PositiveNumber);
  gradcheck->add_option("--corrupt", a.corrupt, "Test hook: perturb the named check's analytic gradient")
      ->group("");

  auto* losscheck = app.add_subcommand("losscheck", "Evaluate the loss examples with known values");

  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled dataset");
  synth->add_option("--n", a.n, "Number of images")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", a.data_seed, "Dataset seed")->required();
  synth->add_option("--out", a.out, "Output directory")->required();
  synth->add_flag("--degrade", a.degrade, "Apply the underwater degradation");

  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--data", a.data, "Dataset directory (images/, labels/)")->required()->check(CLI::ExistingDirectory);
    sub->add_flag("--enhance", a.enhance, "Enhance every image before training");
    sub->add_option("--epochs", a.epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--seed", a.train_seed, "Training seed");
    sub->add_option("--config", a.config, "JSON file overriding training parameters")->check(CLI::ExistingFile);
  };
  auto* train = app.add_subcommand("train", "Train the toy detector");
  add_train_flags(train);
  train->add_flag("--dpsa", a.dpsa, "Use the attention-augmented pooling block");
  train->add_flag("--fgiou", a.fgiou, "Use the GIoU + focal loss");
  train->add_option("--out", a.out, "Run directory")->required();

  auto* eval = app.add_subcommand("eval", "Score predictions against annotations; prints JSON");
  eval->add_option("--pred", a.pred, "Predictions (.jsonl)")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", a.gt, "Dataset directory with the ground truth")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--iou", a.iou, "IoU threshold for P/R/F1")->check(CLI::Range(0.0, 1.0));

  auto* ablate = app.add_subcommand("ablate", "Train all four (DPSA, FGIoU) arms and write a table");
  add_train_flags(ablate);
  ablate->add_option("--out", a.out, "Markdown table path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    std::cout << cli::kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (enhance->parsed()) return run_enhance(a);
    if (gradcheck->parsed()) return run_gradcheck(a);
    if (losscheck->parsed()) return run_losscheck();
    if (synth->parsed()) return run_synth(a);
    if (train->parsed()) return run_train(a, *train);
    if (eval->parsed()) return run_eval(a);
    if (ablate->parsed()) return run_ablate(a, *ablate);
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
