// ildkit command line: synth -> train -> fv -> eval -> bench, reproducible
// from (config, seed). Exit codes: 0 ok, 2 usage, 3 data, 4 numeric.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ildkit/config.hpp"
#include "ildkit/dataset_io.hpp"
#include "ildkit/experiment.hpp"
#include "ildkit/patchbase.hpp"

namespace fs = std::filesystem;
using namespace ildkit;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  Config cfg;

  void load() {
    if (!config_path.empty()) cfg = Config::from_file(config_path);
  }
};

// flag > config > builtin default
double eff(const CLI::Option* o, double flag_v, const Config& cfg,
           const std::string& key, double dflt) {
  if (o->count() > 0) return flag_v;
  return cfg.get_double(key, dflt);
}
long effi(const CLI::Option* o, long flag_v, const Config& cfg,
          const std::string& key, long dflt) {
  if (o->count() > 0) return flag_v;
  return cfg.get_int(key, dflt);
}
std::string effs(const CLI::Option* o, const std::string& flag_v, const Config& cfg,
                 const std::string& key, const std::string& dflt) {
  if (o->count() > 0) return flag_v;
  return cfg.get(key, dflt);
}

std::array<double, kNumClasses> parse_prevalence(const std::string& s) {
  std::array<double, kNumClasses> p{};
  std::istringstream is(s);
  std::string tok;
  int i = 0;
  while (std::getline(is, tok, ',')) {
    if (i >= kNumClasses) throw usage_error("prevalence: expected 4 comma-separated values");
    try {
      p[i++] = std::stod(tok);
    } catch (const std::exception&) {
      throw usage_error("prevalence: bad number '" + tok + "'");
    }
  }
  if (i != kNumClasses) throw usage_error("prevalence: expected 4 comma-separated values");
  return p;
}

nn::TrainOptions train_options_from(const Config& cfg, std::uint64_t seed) {
  nn::TrainOptions opt;
  opt.learning_rate = cfg.get_double("train.lr", 0.005);
  opt.momentum = cfg.get_double("train.momentum", 0.9);
  opt.weight_decay = cfg.get_double("train.weight_decay", 1e-4);
  opt.batch_size = static_cast<int>(cfg.get_int("train.batch", 32));
  opt.epochs = static_cast<int>(cfg.get_int("train.epochs", 12));
  opt.seed = seed;
  return opt;
}

void check_fold(int fold, int k) {
  if (k < 2) throw usage_error("k-folds must be >= 2");
  if (fold < 0 || fold >= k)
    throw usage_error("fold " + std::to_string(fold) + " out of range for k=" +
                      std::to_string(k));
}

void write_loss_history(const fs::path& path, const std::vector<double>& history,
                        const std::string& provenance) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write loss history: " + path.string());
  os << "# provenance: " << provenance << "\n";
  os << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    os << (i + 1) << "," << fmt_double(history[i]) << "\n";
}

void write_eval_outputs(const fs::path& out_dir, const evalkit::EvalReport& rep,
                        const std::string& provenance) {
  fs::create_directories(out_dir);
  evalkit::write_report_csv(out_dir / "metrics.csv", rep, provenance);
  for (int k = 0; k < kNumClasses; ++k) {
    if (!rep.auc_defined[k]) continue;
    evalkit::write_curve_csv(out_dir / ("roc_" + std::string(class_name(k)) + ".csv"),
                             rep.roc[k], provenance);
    evalkit::write_curve_csv(out_dir / ("pr_" + std::string(class_name(k)) + ".csv"),
                             rep.pr[k], provenance);
  }
  evalkit::write_curves_svg(out_dir / "roc.svg", "ROC", "false positive rate",
                            "true positive rate", rep.roc, rep.auc_defined);
  evalkit::write_curves_svg(out_dir / "pr.svg", "Precision-Recall", "recall",
                            "precision", rep.pr, rep.auc_defined);
}

int run(int argc, char** argv) {
  CLI::App app{"ildkit: holistic multi-label lung pattern recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Common common;
  app.add_option("--config", common.config_path, "key=value config file");
  app.add_option("--seed", common.seed, "root seed for all sub-streams");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  std::string synth_out;
  bool synth_force = false;
  long s_patients = 0, s_slices = 0, s_grid = 0;
  std::string s_prev;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_flag("--force", synth_force, "overwrite an existing non-empty directory");
  auto* o_pat = synth->add_option("--patients", s_patients, "number of patients");
  auto* o_sli = synth->add_option("--slices", s_slices, "slices per patient");
  auto* o_grid = synth->add_option("--grid", s_grid, "grid side length");
  auto* o_prev = synth->add_option("--prevalence", s_prev,
                                   "per-class slice prevalence, e.g. 0.5,0.5,0.5,0.5");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a holistic multi-label CNN");
  std::string t_dataset, t_head, t_mapping, t_out;
  bool t_balance = false;
  long t_fold = 0, t_k = 0;
  double t_truth = 0, t_lr = 0, t_normalizer = 0;
  long t_epochs = 0, t_batch = 0, t_input = 0;
  train->add_option("--dataset", t_dataset, "dataset directory")->required();
  train->add_option("--out", t_out, "output checkpoint file")->required();
  auto* o_head = train->add_option("--head", t_head, "loss head: mlc, l2 or sl1");
  auto* o_map = train->add_option("--mapping", t_mapping,
                                  "identity, step:T or piecewise:T1,T2");
  train->add_flag("--balance", t_balance, "enable class-balancing weights");
  auto* o_fold = train->add_option("--fold", t_fold, "held-out fold index");
  auto* o_k = train->add_option("--k-folds", t_k, "number of folds");
  auto* o_truth = train->add_option("--truth-threshold", t_truth,
                                    "pixel count defining binary truth");
  auto* o_lr = train->add_option("--lr", t_lr, "learning rate");
  auto* o_epochs = train->add_option("--epochs", t_epochs, "training epochs");
  auto* o_batch = train->add_option("--batch", t_batch, "batch size");
  auto* o_input = train->add_option("--input-size", t_input, "network input side");
  auto* o_norm = train->add_option("--normalizer", t_normalizer,
                                   "count divisor for identity targets (0 = grid area)");

  // ---- patchtrain ----
  auto* ptrain = app.add_subcommand("patchtrain", "train the patch-based baseline");
  std::string p_dataset, p_out;
  long p_fold = 0, p_k = 0, p_epochs = 0, p_per_slice = 0;
  ptrain->add_option("--dataset", p_dataset, "dataset directory")->required();
  ptrain->add_option("--out", p_out, "output checkpoint file")->required();
  auto* po_fold = ptrain->add_option("--fold", p_fold, "held-out fold index");
  auto* po_k = ptrain->add_option("--k-folds", p_k, "number of folds");
  auto* po_epochs = ptrain->add_option("--epochs", p_epochs, "training epochs");
  auto* po_per = ptrain->add_option("--patches-per-slice", p_per_slice,
                                    "training patch subsample per slice");

  // ---- fv ----
  auto* fvc = app.add_subcommand("fv", "fit the FV + linear regression pipeline");
  std::string f_dataset, f_model, f_layer, f_out;
  long f_M = 0, f_pca = 0, f_fold = 0, f_k = 0, f_cap = 0;
  double f_ridge = 0;
  fvc->add_option("--dataset", f_dataset, "dataset directory")->required();
  fvc->add_option("--model", f_model, "trained CNN checkpoint")->required();
  fvc->add_option("--out", f_out, "output FV pipeline file")->required();
  auto* fo_layer = fvc->add_option("--layer", f_layer, "activation layer tag");
  auto* fo_M = fvc->add_option("--components", f_M, "GMM component count");
  auto* fo_pca = fvc->add_option("--pca-dim", f_pca, "PCA output dimension");
  auto* fo_ridge = fvc->add_option("--ridge", f_ridge, "ridge penalty");
  auto* fo_fold = fvc->add_option("--fold", f_fold, "held-out fold index");
  auto* fo_k = fvc->add_option("--k-folds", f_k, "number of folds");
  auto* fo_cap = fvc->add_option("--subsample-cap", f_cap, "GMM descriptor cap");

  // ---- eval ----
  auto* evalc = app.add_subcommand("eval", "evaluate a model on one fold");
  std::string e_dataset, e_model, e_out;
  long e_fold = 0, e_k = 0;
  double e_truth = 0;
  evalc->add_option("--dataset", e_dataset, "dataset directory")->required();
  evalc->add_option("--model", e_model, "model file (network or fvpipe)")->required();
  evalc->add_option("--out-dir", e_out, "report output directory")->required();
  auto* eo_fold = evalc->add_option("--fold", e_fold, "fold to evaluate");
  auto* eo_k = evalc->add_option("--k-folds", e_k, "number of folds");
  auto* eo_truth = evalc->add_option("--truth-threshold", e_truth,
                                     "override the model's truth threshold");

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "holistic vs patch timing comparison");
  std::string b_dataset, b_holistic, b_patch, b_out;
  long b_n = 0, b_reps = 0;
  bench->add_option("--dataset", b_dataset, "dataset directory")->required();
  bench->add_option("--holistic", b_holistic, "holistic CNN checkpoint")->required();
  bench->add_option("--patch", b_patch, "patch model checkpoint")->required();
  bench->add_option("--out", b_out, "timing CSV output")->required();
  auto* bo_n = bench->add_option("-n,--slices", b_n, "number of slices to time");
  auto* bo_reps = bench->add_option("--reps", b_reps, "measured repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  common.load();
  const Config& cfg = common.cfg;

  if (synth->parsed()) {
    GeneratorSpec spec;
    spec.num_patients = static_cast<int>(effi(o_pat, s_patients, cfg, "synth.patients", 100));
    spec.slices_per_patient =
        static_cast<int>(effi(o_sli, s_slices, cfg, "synth.slices", 8));
    spec.grid_size = static_cast<int>(effi(o_grid, s_grid, cfg, "synth.grid", 64));
    spec.prevalence = parse_prevalence(
        effs(o_prev, s_prev, cfg, "synth.prevalence", "0.45,0.4,0.4,0.45"));
    spec.validate();

    fs::path out(synth_out);
    if (fs::exists(out) && !fs::is_empty(out) && !synth_force)
      throw usage_error("output directory " + synth_out +
                        " is not empty (use --force to overwrite)");
    Config effective = cfg;
    effective.set("synth.patients", std::to_string(spec.num_patients));
    effective.set("synth.slices", std::to_string(spec.slices_per_patient));
    effective.set("synth.grid", std::to_string(spec.grid_size));
    auto slices = generate_dataset(spec, common.seed);
    write_dataset(out, slices, provenance_line(common.seed, effective));
    std::cout << "wrote " << slices.size() << " slices to " << synth_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    auto slices = read_dataset(t_dataset);
    int k = static_cast<int>(effi(o_k, t_k, cfg, "train.k_folds", 5));
    int fold = static_cast<int>(effi(o_fold, t_fold, cfg, "train.fold", 0));
    check_fold(fold, k);
    auto split = make_folds(slices, k, common.seed);

    HolisticConfig hc;
    hc.head = head_from_string(effs(o_head, t_head, cfg, "train.head", "mlc"));
    hc.mapping =
        mapping_from_string(effs(o_map, t_mapping, cfg, "train.mapping", "step:6000"));
    hc.balance = t_balance || cfg.get_int("train.balance", 0) != 0;
    hc.truth_threshold = eff(o_truth, t_truth, cfg, "train.truth_threshold", 6000);
    hc.normalizer = eff(o_norm, t_normalizer, cfg, "train.normalizer", 0);
    hc.input_size = static_cast<int>(effi(o_input, t_input, cfg, "train.input_size", 64));
    hc.opt = train_options_from(cfg, common.seed);
    hc.opt.learning_rate = eff(o_lr, t_lr, cfg, "train.lr", hc.opt.learning_rate);
    hc.opt.epochs = static_cast<int>(effi(o_epochs, t_epochs, cfg, "train.epochs",
                                          hc.opt.epochs));
    hc.opt.batch_size =
        static_cast<int>(effi(o_batch, t_batch, cfg, "train.batch", hc.opt.batch_size));

    auto model = train_holistic(slices, split.train_rows(fold), hc);
    Config effective = cfg;
    effective.set("train.head", head_to_string(hc.head));
    effective.set("train.fold", std::to_string(fold));
    effective.set("train.balance", hc.balance ? "1" : "0");
    std::string prov = provenance_line(common.seed, effective);
    save_holistic(t_out, model, prov);
    write_loss_history(fs::path(t_out).string() + ".loss.csv", model.epoch_loss, prov);
    std::cout << "trained " << head_to_string(hc.head) << " head; final loss "
              << fmt_double(model.epoch_loss.back()) << "\n";
    return 0;
  }

  if (ptrain->parsed()) {
    auto slices = read_dataset(p_dataset);
    int k = static_cast<int>(effi(po_k, p_k, cfg, "patch.k_folds", 5));
    int fold = static_cast<int>(effi(po_fold, p_fold, cfg, "patch.fold", 0));
    check_fold(fold, k);
    auto split = make_folds(slices, k, common.seed);

    patchbase::PatchTrainConfig pc;
    pc.patch_size = static_cast<int>(cfg.get_int("patch.size", 32));
    pc.stride = static_cast<int>(cfg.get_int("patch.stride", 10));
    pc.patches_per_slice =
        static_cast<int>(effi(po_per, p_per_slice, cfg, "patch.patches_per_slice", 24));
    pc.aggregate_fraction = cfg.get_double("patch.aggregate_fraction", 0.05);
    pc.opt = train_options_from(cfg, common.seed);
    pc.opt.epochs =
        static_cast<int>(effi(po_epochs, p_epochs, cfg, "patch.epochs", 6));

    std::vector<LabeledSlice> train_slices;
    for (int r : split.train_rows(fold)) train_slices.push_back(slices[r]);
    auto model =
        patchbase::patch_train(train_slices, nn::patch_net(pc.patch_size), pc);

    Container c;
    c.kind = "patchnet";
    c.meta = {{"provenance", provenance_line(common.seed, cfg)},
              {"net", netspec_to_json(model.net.spec())},
              {"channel_means", model.channel_means},
              {"channel_stds", model.channel_stds},
              {"patch_size", model.patch_size},
              {"stride", model.stride},
              {"aggregate_fraction", model.aggregate_fraction}};
    c.blocks = network_param_blocks(model.net);
    save_container(p_out, c);
    std::cout << "trained patch baseline on " << train_slices.size() << " slices\n";
    return 0;
  }

  if (fvc->parsed()) {
    auto slices = read_dataset(f_dataset);
    int k = static_cast<int>(effi(fo_k, f_k, cfg, "fv.k_folds", 5));
    int fold = static_cast<int>(effi(fo_fold, f_fold, cfg, "fv.fold", 0));
    check_fold(fold, k);
    auto split = make_folds(slices, k, common.seed);
    auto backbone = load_holistic(load_container(f_model));

    FvConfig fc;
    fc.layer = effs(fo_layer, f_layer, cfg, "fv.layer", "conv3");
    fc.components = static_cast<int>(effi(fo_M, f_M, cfg, "fv.components", 32));
    fc.pca_dim = static_cast<int>(effi(fo_pca, f_pca, cfg, "fv.pca_dim", 512));
    fc.ridge = eff(fo_ridge, f_ridge, cfg, "fv.ridge", 1e-3);
    fc.subsample_cap =
        static_cast<int>(effi(fo_cap, f_cap, cfg, "fv.subsample_cap", 200000));
    fc.seed = common.seed;

    auto model = fit_fv_pipeline(slices, split.train_rows(fold), backbone, fc);
    Config effective = cfg;
    effective.set("fv.layer", fc.layer);
    effective.set("fv.fold", std::to_string(fold));
    save_fv_pipeline(f_out, model, provenance_line(common.seed, effective));
    std::cout << "fitted FV pipeline on layer " << fc.layer << " (dim "
              << 2 * model.gmm.M * model.gmm.D << " -> " << model.pca.p << ")\n";
    return 0;
  }

  if (evalc->parsed()) {
    auto slices = read_dataset(e_dataset);
    int k = static_cast<int>(effi(eo_k, e_k, cfg, "eval.k_folds", 5));
    int fold = static_cast<int>(effi(eo_fold, e_fold, cfg, "eval.fold", 0));
    check_fold(fold, k);
    auto split = make_folds(slices, k, common.seed);
    auto rows = split.eval_rows(fold);

    Container c = load_container(e_model);
    Tensor scores;
    std::array<double, kNumClasses> thresholds{};
    double truth = 0;
    if (c.kind == "network") {
      auto model = load_holistic(c);
      scores = holistic_scores(model, slices, rows);
      thresholds = model.thresholds;
      truth = model.truth_threshold;
    } else if (c.kind == "fvpipe") {
      auto model = load_fv_pipeline(c);
      scores = fv_scores(model, slices, rows);
      thresholds = model.thresholds;
      truth = model.truth_threshold;
    } else {
      throw data_error("eval: model kind '" + c.kind + "' is not evaluable");
    }
    if (eo_truth->count() > 0) truth = e_truth;

    auto records = records_from_scores(slices, rows, scores, truth);
    auto report = evalkit::evaluate_records(records, thresholds);
    Config effective = cfg;
    effective.set("eval.fold", std::to_string(fold));
    write_eval_outputs(e_out, report, provenance_line(common.seed, effective));
    std::cout << "overall F1 " << fmt_double(report.overall.f1) << " accuracy "
              << fmt_double(report.overall.accuracy) << "\n";
    return 0;
  }

  if (bench->parsed()) {
    auto slices = read_dataset(b_dataset);
    int n = static_cast<int>(effi(bo_n, b_n, cfg, "bench.slices", 8));
    int reps = static_cast<int>(effi(bo_reps, b_reps, cfg, "bench.reps", 3));
    if (n < 1) throw usage_error("bench: need at least one slice");
    if (n > static_cast<int>(slices.size())) n = static_cast<int>(slices.size());
    slices.resize(n);

    auto holistic = load_holistic(load_container(b_holistic));
    Container pc = load_container(b_patch);
    if (pc.kind != "patchnet") throw data_error("bench: --patch is not a patch model");
    patchbase::PatchModel patch;
    patch.net = nn::Network(netspec_from_json(pc.meta.at("net")));
    std::size_t cursor = 0;
    network_load_blocks(patch.net, pc.blocks, cursor);
    pc.meta.at("channel_means").get_to(patch.channel_means);
    pc.meta.at("channel_stds").get_to(patch.channel_stds);
    patch.patch_size = pc.meta.at("patch_size").get<int>();
    patch.stride = pc.meta.at("stride").get<int>();
    patch.aggregate_fraction = pc.meta.at("aggregate_fraction").get<double>();

    std::vector<patchbase::BenchMethod> methods;
    methods.push_back({"holistic", [&](const LabeledSlice& s) {
                         std::vector<LabeledSlice> one{s};
                         std::vector<int> rows{0};
                         holistic_scores(holistic, one, rows);
                       }});
    methods.push_back({"patch_sliding_window", [&](const LabeledSlice& s) {
                         patchbase::slide_predict(s, patch);
                       }});
    auto stats = patchbase::benchmark(methods, slices, reps);

    double hol_mean = stats[0].second.mean_s, patch_mean = stats[1].second.mean_s;
    double speedup = patch_mean / hol_mean;
    std::ofstream os(b_out, std::ios::binary);
    if (!os) throw data_error("cannot write timing CSV: " + b_out);
    os << "# provenance: " << provenance_line(common.seed, cfg) << "\n";
    os << "method,n_slices,min_s,max_s,mean_s,threads,speedup\n";
    for (const auto& [name, st] : stats)
      os << name << "," << n << "," << fmt_double(st.min_s) << ","
         << fmt_double(st.max_s) << "," << fmt_double(st.mean_s) << ",1,"
         << fmt_double(speedup) << "\n";
    std::cout << "holistic mean " << fmt_double(hol_mean) << " s/slice; patch mean "
              << fmt_double(patch_mean) << " s/slice; speedup "
              << fmt_double(speedup) << "x\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
