#include "dwcaps/cli.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dwcaps/checkpoint.hpp"
#include "dwcaps/rng.hpp"
#include "dwcaps/svg.hpp"
#include "dwcaps/train.hpp"

namespace dwcaps {

namespace {

struct AnalyzeOpts {
  std::string variant;
  std::string sweep_base;
  bool no_bias = false;
  std::string csv_path;
  std::int64_t classes = 0;       // 0 = reference value
  std::int64_t class_dim = 0;
  std::int64_t primary_dim = 0;
};

struct TrainOpts {
  std::string variant = "32-v1-2-2-k3";
  std::string data_path;
  std::string format = "raw-idx";
  std::string synthetic;  // "classes:per_class:size"
  std::string out_dir;
  TrainConfig cfg;
  std::string precision = "float32";
};

struct EvalOpts {
  std::string checkpoint;
  std::string data_path;
  std::string format = "raw-idx";
};

struct GenOpts {
  std::int64_t classes = 3;
  std::int64_t per_class = 100;
  std::int64_t size = 32;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

struct PlotOpts {
  std::string run_csv;
  std::string out_svg;
};

CapsuleConfig analyze_caps(const AnalyzeOpts& opts) {
  CapsuleConfig caps = reference_capsule_config();
  if (opts.classes > 0) caps.num_classes = opts.classes;
  if (opts.class_dim > 0) caps.class_capsule_dim = opts.class_dim;
  if (opts.primary_dim > 0) caps.primary_capsule_dim = opts.primary_dim;
  return caps;
}

void print_twin_reduction(const ArchitectureVariant& variant,
                          const CapsuleConfig& caps, bool with_bias) {
  if (variant.num_convs < 2) {
    std::cout << "single-conv variant: no substituted layer to compare\n";
    return;
  }
  const auto cmp =
      compare_dw_vs_sc(variant, variant.twin(), caps, with_bias);
  std::printf("twin comparison: %s %lld params vs %s %lld params\n",
              cmp.v1_name.c_str(), static_cast<long long>(cmp.params_v1),
              cmp.v2_name.c_str(), static_cast<long long>(cmp.params_v2));
  std::printf("separable second conv reduces total parameters by %.1f%%\n",
              cmp.reduction_percent);
}

int cmd_analyze(const AnalyzeOpts& opts) {
  const CapsuleConfig caps = analyze_caps(opts);
  const bool with_bias = !opts.no_bias;
  if (!opts.sweep_base.empty()) {
    ArchitectureVariant base =
        ArchitectureVariant::parse(opts.sweep_base + "-k9");
    auto entries = kernel_sweep(base, caps);
    std::string csv = "variant,total_params,reduction_percent\n";
    std::printf("%-16s %14s %12s\n", "variant", "total_params", "reduction");
    for (const auto& e : entries) {
      if (!e.ok) {
        std::printf("%-16s %s\n", e.variant.name().c_str(), e.error.c_str());
        csv += e.variant.name() + ",error,\n";
        continue;
      }
      const std::int64_t total =
          with_bias ? e.total_params : e.report.total_params();
      double reduction = 0.0;
      if (e.variant.num_convs == 2) {
        reduction = compare_dw_vs_sc(e.variant, e.variant.twin(), caps,
                                     with_bias)
                        .reduction_percent;
      }
      std::printf("%-16s %14lld %11.1f%%\n", e.variant.name().c_str(),
                  static_cast<long long>(total), reduction);
      char num[32];
      std::snprintf(num, sizeof(num), "%.1f", reduction);
      csv += e.variant.name() + "," + std::to_string(total) + "," + num + "\n";
    }
    if (!opts.csv_path.empty()) {
      std::ofstream out(opts.csv_path, std::ios::binary | std::ios::trunc);
      if (!out) throw FormatError("cannot write " + opts.csv_path);
      out << csv;
      std::cout << "wrote " << opts.csv_path << "\n";
    }
    return 0;
  }

  ArchitectureVariant variant = ArchitectureVariant::parse(opts.variant);
  auto model = ModelGraph<float>::build(variant, caps, 0);
  const CostReport report = model.cost_report(with_bias);
  std::cout << "variant " << variant.name() << "\n" << report.to_table();
  print_twin_reduction(variant, caps, with_bias);
  if (!opts.csv_path.empty()) {
    std::ofstream out(opts.csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + opts.csv_path);
    out << report.to_csv();
    std::cout << "wrote " << opts.csv_path << "\n";
  }
  return 0;
}

DatasetBundle train_dataset(const TrainOpts& opts) {
  DatasetBundle bundle;
  if (!opts.synthetic.empty()) {
    std::int64_t classes = 0, per_class = 0, size = 0;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(opts.synthetic);
    in >> classes >> sep1 >> per_class >> sep2 >> size;
    if (!in || sep1 != ':' || sep2 != ':') {
      throw DomainError("--synthetic expects classes:per_class:size, got \"" +
                        opts.synthetic + "\"");
    }
    bundle = generate_synthetic(classes, per_class, size,
                                mix_seed(opts.cfg.seed, 3));
  } else if (!opts.data_path.empty()) {
    bundle = load_dataset(opts.data_path, opts.format);
  } else {
    throw DomainError("train: provide --data PATH or --synthetic SPEC");
  }
  return split(std::move(bundle), opts.cfg.split_ratio,
               opts.cfg.subsample_fraction, opts.cfg.seed);
}

template <class T>
int run_train(const TrainOpts& opts) {
  DatasetBundle data = train_dataset(opts);
  TrainConfig cfg = opts.cfg;
  cfg.variant = opts.variant;
  cfg.caps.num_classes = data.num_classes();
  auto model = ModelGraph<T>::build(ArchitectureVariant::parse(cfg.variant),
                                    cfg.caps, mix_seed(cfg.seed, 7));
  std::printf("variant %s: %lld parameters, %lld train / %lld test items\n",
              cfg.variant.c_str(),
              static_cast<long long>(model.total_parameters()),
              static_cast<long long>(data.train_indices.size()),
              static_cast<long long>(data.test_indices.size()));
  const RunRecord record = train(model, data, cfg, opts.out_dir);
  for (const auto& e : record.epochs) {
    std::printf(
        "epoch %d: train_loss %.6f train_acc %.4f test_acc %.4f (%.1fs)\n",
        e.epoch, e.train_loss, e.train_acc, e.test_acc, e.seconds);
  }
  if (!opts.out_dir.empty()) {
    std::cout << "wrote " << opts.out_dir << "/run.csv and " << opts.out_dir
              << "/model.ckpt (checksum " << record.final_checksum << ")\n";
  }
  return 0;
}

int cmd_eval(const EvalOpts& opts) {
  const CheckpointInfo info = checkpoint_info(opts.checkpoint);
  DatasetBundle data = load_dataset(opts.data_path, opts.format);
  std::vector<std::int64_t> all(static_cast<std::size_t>(data.count()));
  for (std::int64_t i = 0; i < data.count(); ++i)
    all[static_cast<std::size_t>(i)] = i;
  EvalResult result;
  if (info.scalar_width == 4) {
    auto model = load_checkpoint<float>(opts.checkpoint);
    result = evaluate(model, data, all);
  } else {
    auto model = load_checkpoint<double>(opts.checkpoint);
    result = evaluate(model, data, all);
  }
  std::printf("variant %s on %lld items: accuracy %.4f\n", info.variant.c_str(),
              static_cast<long long>(data.count()), result.accuracy);
  std::cout << "confusion (rows = target, cols = predicted):\n";
  for (std::size_t t = 0; t < result.confusion.size(); ++t) {
    std::printf("%-10s", data.class_names[t].c_str());
    for (std::int64_t v : result.confusion[t])
      std::printf(" %6lld", static_cast<long long>(v));
    std::printf("\n");
  }
  return 0;
}

int cmd_gen(const GenOpts& opts) {
  DatasetBundle bundle =
      generate_synthetic(opts.classes, opts.per_class, opts.size, opts.seed);
  save_raw_idx(bundle, opts.out_prefix);
  std::printf("wrote %s.images / %s.labels: %lld items, %lld classes, %lldx%lld\n",
              opts.out_prefix.c_str(), opts.out_prefix.c_str(),
              static_cast<long long>(bundle.count()),
              static_cast<long long>(bundle.num_classes()),
              static_cast<long long>(bundle.width),
              static_cast<long long>(bundle.height));
  return 0;
}

int cmd_plot(const PlotOpts& opts) {
  std::ifstream in(opts.run_csv);
  if (!in) throw FormatError("cannot open " + opts.run_csv);
  std::string header;
  std::getline(in, header);
  if (header != "epoch,train_loss,train_acc,test_acc,seconds") {
    throw FormatError(opts.run_csv + ": not a run record CSV");
  }
  std::vector<double> epochs;
  ChartSeries train_acc{"train_acc", {}}, test_acc{"test_acc", {}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double e = 0, loss = 0, tr = 0, te = 0, sec = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &e, &loss, &tr, &te,
                    &sec) != 5) {
      throw FormatError(opts.run_csv + ": malformed row \"" + line + "\"");
    }
    epochs.push_back(e);
    train_acc.y.push_back(tr);
    test_acc.y.push_back(te);
  }
  write_line_chart(opts.out_svg, epochs, {train_acc, test_acc},
                   "accuracy vs epoch", "epoch", "accuracy");
  std::cout << "wrote " << opts.out_svg << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"capsule networks with depthwise separable convolutions"};
  app.require_subcommand(1);

  AnalyzeOpts analyze_opts;
  auto* analyze = app.add_subcommand(
      "analyze", "per-layer parameter/MAC report and twin comparison");
  analyze->add_option("variant", analyze_opts.variant,
                      "variant name, e.g. 32-v1-2-2-k3");
  analyze->add_option("--sweep", analyze_opts.sweep_base,
                      "sweep kernel sizes 9/7/5/3 of a base, e.g. 32-v1-2-2");
  analyze->add_flag("--no-bias", analyze_opts.no_bias,
                    "exclude biases from parameter counts");
  analyze->add_option("--csv", analyze_opts.csv_path, "write report CSV here");
  analyze->add_option("--classes", analyze_opts.classes, "class count");
  analyze->add_option("--class-dim", analyze_opts.class_dim,
                      "class capsule dimension");
  analyze->add_option("--primary-dim", analyze_opts.primary_dim,
                      "primary capsule dimension");

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a variant");
  train_cmd->add_option("--variant", train_opts.variant, "variant name")
      ->required();
  train_cmd->add_option("--data", train_opts.data_path, "dataset path");
  train_cmd->add_option("--format", train_opts.format,
                        "raw-idx or image-dir");
  train_cmd->add_option("--synthetic", train_opts.synthetic,
                        "generate data: classes:per_class:size");
  train_cmd->add_option("--epochs", train_opts.cfg.epochs, "epochs");
  train_cmd->add_option("--batch-size", train_opts.cfg.batch_size, "batch");
  train_cmd->add_option("--lr", train_opts.cfg.learning_rate, "learning rate");
  train_cmd->add_option("--optimizer", train_opts.cfg.optimizer, "adam|sgd");
  train_cmd->add_option("--seed", train_opts.cfg.seed, "run seed");
  train_cmd->add_option("--ratio", train_opts.cfg.split_ratio,
                        "train fraction of the split");
  train_cmd->add_option("--subsample", train_opts.cfg.subsample_fraction,
                        "per-class subsample fraction");
  train_cmd->add_option("--class-dim", train_opts.cfg.caps.class_capsule_dim,
                        "class capsule dimension");
  train_cmd->add_option("--primary-dim",
                        train_opts.cfg.caps.primary_capsule_dim,
                        "primary capsule dimension");
  train_cmd->add_option("--routing", train_opts.cfg.caps.routing_iterations,
                        "routing iterations");
  train_cmd->add_option("--precision", train_opts.precision,
                        "float32|float64");
  train_cmd->add_option("--stop-at-train-acc", train_opts.cfg.stop_at_train_acc,
                        "stop early at this train accuracy");
  train_cmd->add_option("--out", train_opts.out_dir,
                        "directory for run.csv and model.ckpt");

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--data", eval_opts.data_path, "dataset path")
      ->required();
  eval_cmd->add_option("--format", eval_opts.format, "raw-idx or image-dir");

  GenOpts gen_opts;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen_cmd->add_option("--classes", gen_opts.classes, "class count");
  gen_cmd->add_option("--per-class", gen_opts.per_class, "items per class");
  gen_cmd->add_option("--size", gen_opts.size, "image size, 32 or 64");
  gen_cmd->add_option("--seed", gen_opts.seed, "generator seed");
  gen_cmd->add_option("--out", gen_opts.out_prefix, "output path prefix")
      ->required();

  PlotOpts plot_opts;
  auto* plot_cmd = app.add_subcommand("plot", "accuracy-vs-epoch SVG chart");
  plot_cmd->add_option("--run", plot_opts.run_csv, "run record CSV")
      ->required();
  plot_cmd->add_option("--out", plot_opts.out_svg, "output SVG path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(analyze)) {
      if (analyze_opts.variant.empty() && analyze_opts.sweep_base.empty()) {
        std::cerr << "analyze: provide a variant name or --sweep BASE\n";
        return 1;
      }
      return cmd_analyze(analyze_opts);
    }
    if (app.got_subcommand(train_cmd)) {
      if (train_opts.precision == "float32") {
        return run_train<float>(train_opts);
      }
      if (train_opts.precision == "float64") {
        return run_train<double>(train_opts);
      }
      throw DomainError("--precision must be float32 or float64");
    }
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_opts);
    if (app.got_subcommand(gen_cmd)) return cmd_gen(gen_opts);
    if (app.got_subcommand(plot_cmd)) return cmd_plot(plot_opts);
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace dwcaps
