// Command-line front end: train / eval / synth / export-curves.
// Exit codes: 0 ok, 2 usage or config error, 3 runtime abort.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "siavc/siavc.hpp"

namespace {

using nlohmann::ordered_json;

struct TrainArgs {
  siavc::RunConfig cfg;
  std::string out = "siavc_out";
  bool synthetic = false;
  int per_class = 20;
  std::string train_manifest;
  std::string test_manifest;
  int labels = 0;          // explicit labeled count; wins over labels_frac
  double labels_frac = 0.1;
  bool no_sab = false;
  bool no_vcam = false;
  bool no_fairness = false;
  bool supervised = false;
  bool mask_shared = false;
  bool sab_diag = false;
  bool has_fixed_threshold = false;
};

std::string resolve_out_dir(const std::string& flag_value) {
  if (const char* env = std::getenv("SIAVC_OUT")) {
    if (env[0] != '\0') return env;
  }
  return flag_value;
}

int run_train(TrainArgs& a) {
  siavc::SyntheticDataset ds;
  siavc::DataSplit split;
  try {
    a.cfg.use_sab = !a.no_sab;
    a.cfg.use_vcam = !a.no_vcam;
    a.cfg.use_fairness = !a.no_fairness;
    a.cfg.supervised_only = a.supervised;
    a.cfg.mask_per_frame = !a.mask_shared;
    if (a.has_fixed_threshold) a.cfg.use_sat = false;
    a.cfg.validate();

    if (a.synthetic) {
      ds = siavc::generate_synthetic(a.cfg.n_classes, a.per_class,
                                     a.cfg.frames, a.cfg.height, a.cfg.width,
                                     a.cfg.seed);
    } else {
      if (a.train_manifest.empty() || a.test_manifest.empty()) {
        std::cerr << "train: need --synthetic or both --train-manifest and "
                     "--test-manifest\n";
        return 2;
      }
      ds = siavc::load_dataset(a.train_manifest, a.test_manifest, a.cfg.frames,
                               a.cfg.height, a.cfg.width, a.cfg.channels);
      if (static_cast<int>(ds.classes.size()) != a.cfg.n_classes) {
        std::cerr << "train: manifest has " << ds.classes.size()
                  << " classes, config says " << a.cfg.n_classes << "\n";
        return 2;
      }
    }
    int budget = a.labels;
    if (budget <= 0) {
      budget = std::max(
          1, static_cast<int>(std::llround(a.labels_frac * ds.train.size())));
    }
    split = siavc::make_split(ds.train, ds.test, ds.classes,
                              {budget, a.cfg.seed});
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return 2;
  }

  const std::string out_dir = resolve_out_dir(a.out);
  try {
    siavc::Trainer trainer(a.cfg, std::move(split), out_dir);
    if (a.sab_diag) trainer.enable_sab_diagnostics();
    std::cout << "training: " << trainer.data().labeled.size() << " labeled, "
              << trainer.data().unlabeled.size() << " unlabeled, "
              << trainer.data().test.size() << " test; "
              << a.cfg.total_steps << " steps -> " << out_dir << "\n";
    const siavc::TrainReport rep = trainer.run();

    ordered_json j;
    j["steps"] = rep.steps;
    j["final_top1"] = rep.final_top1;
    j["final_top5"] = rep.final_top5;
    j["best_top1"] = rep.best_top1;
    j["best_top5"] = rep.best_top5;
    j["best_step"] = rep.best_step;
    j["labeled"] = trainer.data().labeled.size();
    j["unlabeled"] = trainer.data().unlabeled.size();
    j["test"] = trainer.data().test.size();
    j["seed"] = a.cfg.seed;
    std::ofstream rf(out_dir + "/report.json");
    rf << j.dump(2) << "\n";

    std::cout << "final top1 " << rep.final_top1 << " top5 " << rep.final_top5
              << " | best top1 " << rep.best_top1 << " @ step "
              << rep.best_step << "\n";
    return 0;
  } catch (const siavc::TrainAbortError& e) {
    std::cerr << "train aborted: " << e.what() << "; batch ids:";
    for (auto id : e.batch_ids()) std::cerr << ' ' << id;
    std::cerr << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "train aborted: " << e.what() << "\n";
    return 3;
  }
}

struct EvalArgs {
  std::string checkpoint;
  std::string test_manifest;
  bool synthetic = false;
  int classes = 9;
  int per_class = 20;
  std::uint64_t seed = 7;
  std::string out = "siavc_out";
};

int run_eval(EvalArgs& a) {
  try {
    auto ckpt = siavc::load_checkpoint_model(a.checkpoint);
    const auto& mc = ckpt.config;
    std::vector<siavc::LabeledSample> test;
    if (a.synthetic) {
      test = siavc::generate_synthetic(a.classes, a.per_class, mc.frames,
                                       mc.height, mc.width, a.seed)
                 .test;
    } else {
      if (a.test_manifest.empty()) {
        std::cerr << "eval: need --test-manifest or --synthetic\n";
        return 2;
      }
      const auto entries = siavc::load_manifest(a.test_manifest);
      std::map<std::string, int> classes;
      for (const auto& e : entries) classes.emplace(e.class_name, 0);
      int idx = 0;
      for (auto& [name, i] : classes) i = idx++;
      siavc::SampleId id = 0;
      for (const auto& e : entries) {
        test.push_back({siavc::load_video(e.path, mc.frames, mc.height,
                                          mc.width, mc.channels),
                        classes.at(e.class_name), id++});
      }
    }
    if (test.empty()) {
      std::cerr << "eval: empty test set\n";
      return 2;
    }

    const auto [top1, top5] =
        siavc::Trainer::evaluate_model(ckpt.model, test);

    const std::string out_dir = resolve_out_dir(a.out);
    std::filesystem::create_directories(out_dir);
    // latent features, one row per test sample
    std::vector<float> latents;
    for (const auto& s : test) {
      const auto z = ckpt.model.latent(s.video);
      latents.insert(latents.end(), z.data(), z.data() + z.size());
    }
    const std::uint32_t dims[2] = {
        static_cast<std::uint32_t>(test.size()),
        static_cast<std::uint32_t>(mc.patch.embed_dim)};
    siavc::save_raw_tensor(out_dir + "/latents.t2", dims, latents);

    ordered_json j;
    j["checkpoint"] = a.checkpoint;
    j["test"] = test.size();
    j["top1"] = top1;
    j["top5"] = top5;
    std::ofstream rf(out_dir + "/eval.json");
    rf << j.dump(2) << "\n";
    std::cout << "top1 " << top1 << " top5 " << top5 << " (" << test.size()
              << " samples)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << "\n";
    return 2;
  }
}

struct SynthArgs {
  std::string out = "siavc_data";
  int classes = 9;
  int per_class = 20;
  int frames = 8;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 7;
};

int run_synth(SynthArgs& a) {
  try {
    const auto ds = siavc::generate_synthetic(a.classes, a.per_class, a.frames,
                                              a.height, a.width, a.seed);
    siavc::write_dataset_dir(ds, a.out);
    std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
              << " test videos to " << a.out << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return 2;
  }
}

// --- export-curves ---------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (step, value)
};

void write_svg(const std::string& path, const std::string& title,
               const std::vector<Series>& series) {
  const int width = 860, height = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  const auto sy = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2"};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
     << width - mr << "\" y2=\"" << height - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  char buf[64];
  auto label = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };
  os << "<text x=\"" << ml << "\" y=\"" << height - mb + 18
     << "\" font-family=\"sans-serif\" font-size=\"11\">" << label(xmin)
     << "</text>\n";
  os << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 18
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
     << label(xmax) << "</text>\n";
  os << "<text x=\"" << ml - 6 << "\" y=\"" << height - mb
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
     << label(ymin) << "</text>\n";
  os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
     << label(ymax) << "</text>\n";
  int ci = 0;
  int ly = mt + 8;
  for (const auto& s : series) {
    const char* color = colors[ci++ % 7];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points) {
      os << sx(x) << ',' << sy(y) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << width - mr - 150 << "\" y=\"" << ly
       << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
       << "\">" << s.name << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";
}

struct CurvesArgs {
  std::string metrics;
  std::string out = "siavc_out";
};

int run_export_curves(CurvesArgs& a) {
  try {
    std::ifstream is(a.metrics);
    if (!is) {
      std::cerr << "export-curves: cannot open " << a.metrics << "\n";
      return 2;
    }
    std::string header;
    if (!std::getline(is, header) ||
        header != siavc::metrics_csv_header()) {
      std::cerr << "export-curves: unrecognized metrics header\n";
      return 2;
    }
    std::vector<std::string> cols;
    {
      std::istringstream hs(header);
      std::string c;
      while (std::getline(hs, c, ',')) cols.push_back(c);
    }
    std::map<std::string, Series> series;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::vector<std::string> fields;
      std::string f;
      while (std::getline(ls, f, ',')) fields.push_back(f);
      fields.resize(cols.size());
      const double step = std::stod(fields[0]);
      ++rows;
      for (std::size_t i = 1; i < cols.size(); ++i) {
        if (fields[i].empty() || fields[i] == "nan") continue;
        auto& s = series[cols[i]];
        s.name = cols[i];
        s.points.push_back({step, std::stod(fields[i])});
      }
    }
    if (rows == 0) {
      std::cerr << "export-curves: no data rows in " << a.metrics << "\n";
      return 2;
    }
    const std::string out_dir = resolve_out_dir(a.out);
    std::filesystem::create_directories(out_dir);

    std::vector<Series> loss_series;
    for (const char* name : {"l_cs", "l_align", "l_cons", "l_fair", "total"}) {
      if (series.count(name) && !series[name].points.empty()) {
        loss_series.push_back(series[name]);
      }
    }
    write_svg(out_dir + "/loss_curves.svg", "loss vs iteration", loss_series);

    std::vector<Series> acc_series;
    for (const char* name : {"pseudo_acc", "top1", "top5"}) {
      if (series.count(name) && !series[name].points.empty()) {
        acc_series.push_back(series[name]);
      }
    }
    write_svg(out_dir + "/pseudo_accuracy.svg",
              "pseudo-label accuracy vs iteration", acc_series);

    std::ofstream tidy(out_dir + "/curves_tidy.csv");
    tidy << "step,series,value\n";
    for (const auto& [name, s] : series) {
      for (const auto& [x, y] : s.points) {
        tidy << x << ',' << name << ',' << siavc::format_metric(y) << '\n';
      }
    }
    std::cout << "wrote curves for " << rows << " rows to " << out_dir
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "export-curves: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIAVC: semi-supervised industrial accident video classification"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "run the training loop");
  train->set_config("--config")
      ->transform(CLI::FileOnDefaultPath("."));
  train->allow_config_extras(CLI::config_extras_mode::error);
  train->add_option("--out", ta.out, "output directory");
  train->add_flag("--synthetic", ta.synthetic, "generate synthetic data");
  train->add_option("--per-class", ta.per_class, "synthetic videos per class");
  train->add_option("--train-manifest", ta.train_manifest, "train manifest");
  train->add_option("--test-manifest", ta.test_manifest, "test manifest");
  train->add_option("--labels", ta.labels, "labeled sample count");
  train->add_option("--labels-frac", ta.labels_frac,
                    "labeled fraction of the train set");
  train->add_option("--seed", ta.cfg.seed, "run seed");
  train->add_option("--steps", ta.cfg.total_steps, "total training steps");
  train->add_option("--classes", ta.cfg.n_classes, "class count");
  train->add_option("--frames", ta.cfg.frames, "frames per video");
  train->add_option("--height", ta.cfg.height, "frame height");
  train->add_option("--width", ta.cfg.width, "frame width");
  train->add_option("--channels", ta.cfg.channels, "channels");
  train->add_option("--lr", ta.cfg.lr, "base learning rate");
  train->add_option("--momentum", ta.cfg.momentum, "SGD momentum");
  train->add_option("--weight-decay", ta.cfg.weight_decay, "weight decay");
  train->add_option("--batch-labeled", ta.cfg.batch_labeled, "labeled batch");
  train->add_option("--batch-unlabeled", ta.cfg.batch_unlabeled,
                    "unlabeled batch");
  train->add_option("--vcam-batch", ta.cfg.vcam_batch, "interpolated batch");
  train->add_option("--wa", ta.cfg.w_align, "alignment loss weight");
  train->add_option("--wc", ta.cfg.w_cons, "consistency loss weight");
  train->add_option("--wf", ta.cfg.w_fair, "fairness loss weight");
  train->add_option("--rho", ta.cfg.rho, "alignment class-term weight");
  train->add_option("--tau", ta.cfg.vcam_tau, "VCAM confidence threshold");
  train->add_option("--alpha", ta.cfg.beta_alpha, "beta parameter for lambda");
  train->add_option("--sigma", ta.cfg.noise_sigma, "super-augment noise std");
  train->add_option("--mask-lo", ta.cfg.mask_lo, "mask fraction lower bound");
  train->add_option("--mask-hi", ta.cfg.mask_hi, "mask fraction upper bound");
  train->add_flag("--mask-shared", ta.mask_shared,
                  "one mask rectangle shared across frames");
  train->add_option("--ema", ta.cfg.ema_momentum, "threshold EMA momentum");
  train->add_option("--fixed-threshold", ta.cfg.fixed_threshold,
                    "disable SAT and use this constant threshold");
  train->add_option("--randaug-ops", ta.cfg.randaug_ops,
                    "ops per strong augmentation");
  train->add_option("--sab-min-history", ta.cfg.sab_min_history,
                    "history length before SAB can gate");
  train->add_option("--otsu-bins", ta.cfg.otsu_bins, "OTSU histogram bins");
  train->add_flag("--sab-pooled", ta.cfg.sab_pooled,
                  "pool loss histories across samples");
  train->add_flag("--no-sab", ta.no_sab, "disable the super augmentation block");
  train->add_flag("--no-vcam", ta.no_vcam, "disable cross-set augmentation");
  train->add_flag("--no-fairness", ta.no_fairness, "disable the fairness loss");
  train->add_flag("--supervised", ta.supervised,
                  "labeled-only supervised baseline");
  train->add_option("--embed-dim", ta.cfg.patch.embed_dim, "token width");
  train->add_option("--blocks", ta.cfg.encoder_blocks, "encoder blocks");
  train->add_option("--heads", ta.cfg.encoder_heads, "attention heads");
  train->add_option("--mlp-hidden", ta.cfg.mlp_hidden, "MLP hidden width");
  train->add_option("--patch-t", ta.cfg.patch.patch_t, "patch frames");
  train->add_option("--patch-h", ta.cfg.patch.patch_h, "patch height");
  train->add_option("--patch-w", ta.cfg.patch.patch_w, "patch width");
  train->add_option("--eval-interval", ta.cfg.eval_interval, "eval period");
  train->add_option("--ckpt-interval", ta.cfg.ckpt_interval,
                    "checkpoint period (0: final only)");
  train->add_flag("--sab-diag", ta.sab_diag, "dump SAB gating diagnostics");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--test-manifest", ea.test_manifest, "test manifest");
  eval->add_flag("--synthetic", ea.synthetic, "regenerate the synthetic test set");
  eval->add_option("--classes", ea.classes, "synthetic class count");
  eval->add_option("--per-class", ea.per_class, "synthetic videos per class");
  eval->add_option("--seed", ea.seed, "synthetic seed");
  eval->add_option("--out", ea.out, "output directory");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--out", sa.out, "dataset directory");
  synth->add_option("--classes", sa.classes, "class count");
  synth->add_option("--per-class", sa.per_class, "videos per class");
  synth->add_option("--frames", sa.frames, "frames per video");
  synth->add_option("--height", sa.height, "frame height");
  synth->add_option("--width", sa.width, "frame width");
  synth->add_option("--seed", sa.seed, "generator seed");

  CurvesArgs ca;
  auto* curves =
      app.add_subcommand("export-curves", "plot a metrics CSV");
  curves->add_option("--metrics", ca.metrics, "metrics.csv path")->required();
  curves->add_option("--out", ca.out, "output directory");

  int rc = 0;
  train->callback([&] {
    ta.has_fixed_threshold = train->count("--fixed-threshold") > 0;
    rc = run_train(ta);
  });
  eval->callback([&] { rc = run_eval(ea); });
  synth->callback([&] { rc = run_synth(sa); });
  curves->callback([&] { rc = run_export_curves(ca); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return rc;
}
