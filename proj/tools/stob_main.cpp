// stob: generate data, train, forecast, evaluate and verify observer models.
//
// Exit codes: 0 on success, 1 when a numerical check or run fails, 2 on
// usage/configuration errors (bad flags, malformed files, mismatched
// artifacts).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stob/checkpoint.hpp"
#include "stob/config.hpp"
#include "stob/datasets.hpp"
#include "stob/errors.hpp"
#include "stob/evaluation.hpp"
#include "stob/gradcheck.hpp"
#include "stob/learning.hpp"
#include "stob/observer.hpp"
#include "stob/threads.hpp"

namespace {

using i64 = std::int64_t;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsageError = 2;

// Seed streams for the independent RNG consumers.
constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kGradcheckStream = 0x67726164ULL;
constexpr std::uint64_t kConvergenceStream = 0x636f6e76ULL;

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

/// Renders a threshold as its JSON report key ("5", "20", "37.5", ...).
std::string threshold_key(double t) {
  const long long rounded = std::llround(t);
  if (static_cast<double>(rounded) == t) return std::to_string(rounded);
  std::string s = fmt(t, 10);
  return s;
}

double tensor_frobenius(const stob::Tensor<float>& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

/// Micro architecture used by the verification subcommands: small enough to
/// finite-difference in seconds yet exercising every layer kind.
stob::ObserverConfig micro_config() {
  stob::ObserverConfig cfg;
  cfg.channels = 1;
  cfg.height = 16;
  cfg.width = 16;
  cfg.t_in = 4;
  cfg.t_out = 4;
  cfg.delta = 2;
  cfg.n_s = 2;
  cfg.c_s = 8;
  cfg.n_h = 1;
  cfg.c_h = 16;
  cfg.n_t = 1;
  cfg.c_t = 16;
  return cfg;
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "digits";
  i64 n = 100;
  i64 t = 20;
  i64 hw = 64;
  i64 objects = 2;
  i64 sprite = 12;
  double min_speed = 0.5;
  double max_speed = 2.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  stob::MotionSpec spec;
  spec.objects = a.objects;
  spec.sprite = a.sprite;
  spec.min_speed = a.min_speed;
  spec.max_speed = a.max_speed;
  spec.seed = a.seed;

  stob::SequenceData<float> data =
      a.kind == "digits"
          ? stob::gen_moving_digits<float>(spec, a.n, a.t, a.hw, a.hw)
          : stob::gen_bouncing_blobs<float>(spec, a.n, a.t, a.hw, a.hw);
  stob::write_dataset(a.out, data);
  std::cout << "wrote " << a.out << ": " << a.n << " sequences of " << a.t
            << " frames (1x" << a.hw << "x" << a.hw << ", " << a.kind << ")\n";
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  i64 epochs_override = 0;
};

int cmd_train(const TrainArgs& a) {
  stob::ExperimentConfig cfg = !a.resume.empty() && a.config.empty()
                                   ? stob::read_checkpoint_config(a.resume)
                                   : stob::ExperimentConfig::load(a.config);
  if (a.epochs_override > 0) cfg.training.epochs = a.epochs_override;

  const std::string data_path = a.data.empty() ? cfg.data.path : a.data;
  if (data_path.empty()) {
    throw stob::ConfigError("no dataset: pass --data or set data.path");
  }
  stob::SequenceData<float> ds = stob::read_dataset<float>(data_path);
  if (ds.frames.dim(2) != cfg.data.channels || ds.frames.dim(3) != cfg.data.height ||
      ds.frames.dim(4) != cfg.data.width) {
    throw stob::ConfigError(
        "dataset geometry " + stob::shape_str(ds.frames.shape()) +
        " does not match the configured (C, H, W) = (" +
        std::to_string(cfg.data.channels) + ", " + std::to_string(cfg.data.height) +
        ", " + std::to_string(cfg.data.width) + ")");
  }
  auto [inputs, targets] =
      stob::split_time(ds.frames, cfg.data.t_in, cfg.data.t_out);

  stob::ObserverModel<float> model(cfg.observer_config(), cfg.seed);
  stob::Adam<float> optimizer(model.parameters(), cfg.optimizer);
  stob::Rng rng(stob::mix_seed(cfg.seed, kTrainStream));

  i64 start_epoch = 0;
  if (!a.resume.empty()) {
    stob::CheckpointInfo info = stob::load_checkpoint(a.resume, model, &optimizer);
    start_epoch = info.epoch;
    rng.set_state(info.rng_state);
    std::cout << "resumed from " << a.resume << " at epoch " << start_epoch << "\n";
  }

  std::filesystem::create_directories(a.out);
  const std::string csv_path = a.out + "/metrics.csv";
  const std::string ckpt_path = a.out + "/checkpoint.stob";
  stob::MetricsCsv csv(csv_path);

  std::cout << cfg.name << ": " << ds.samples() << " sequences, "
            << cfg.training.epochs << " epochs, batch " << cfg.training.batch_size
            << "\n";
  for (i64 epoch = start_epoch; epoch < cfg.training.epochs; ++epoch) {
    stob::EpochStats stats = stob::train_epoch(
        model, inputs, targets, cfg.loss, optimizer, cfg.training.batch_size, rng);
    csv.append(epoch + 1, stats.mean, stats.seconds);
    std::cout << "epoch " << (epoch + 1) << "/" << cfg.training.epochs
              << "  total " << fmt(stats.mean.total) << "  L_y "
              << fmt(stats.mean.l_y) << "  " << fmt(stats.seconds, 3) << " s";
    if (stats.skipped_steps > 0) std::cout << "  skipped " << stats.skipped_steps;
    std::cout << "\n" << std::flush;
    stob::save_checkpoint(ckpt_path, cfg, model, &optimizer, epoch + 1,
                          rng.state());
  }
  std::cout << "checkpoint: " << ckpt_path << "\nmetrics: " << csv_path << "\n";
  return kOk;
}

// ---- predict ----------------------------------------------------------------

struct PredictArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  std::string render;
  i64 horizon = 0;
};

int cmd_predict(const PredictArgs& a) {
  stob::ExperimentConfig cfg = stob::read_checkpoint_config(a.ckpt);
  stob::ObserverModel<float> model(cfg.observer_config(), cfg.seed);
  stob::load_checkpoint<float>(a.ckpt, model, nullptr);

  stob::SequenceData<float> ds = stob::read_dataset<float>(a.input);
  if (ds.length() < cfg.data.t_in) {
    throw stob::ConfigError("input provides " + std::to_string(ds.length()) +
                            " frames; the model consumes " +
                            std::to_string(cfg.data.t_in));
  }
  const i64 horizon = a.horizon > 0 ? a.horizon : cfg.data.t_out;
  stob::Tensor<float> y_in =
      stob::slice_frames<float>(nullptr, ds.frames, 0, cfg.data.t_in);
  stob::Rollout<float> rollout = model.forecast_sequence(nullptr, y_in, horizon);

  stob::SequenceData<float> out;
  out.frames = rollout.frames;
  out.normalized = ds.normalized;
  stob::write_dataset(a.out, out);
  std::cout << "wrote " << a.out << ": " << out.samples() << " sequences of "
            << horizon << " predicted frames\n";

  if (!a.render.empty()) {
    std::filesystem::create_directories(a.render);
    const i64 n = out.frames.dim(0), l = out.frames.dim(1), c = out.frames.dim(2);
    const i64 h = out.frames.dim(3), w = out.frames.dim(4);
    auto fv = out.frames.data();
    for (i64 s = 0; s < n; ++s) {
      for (i64 k = 0; k < l; ++k) {
        for (i64 ch = 0; ch < c; ++ch) {
          stob::Tensor<float> plane = stob::Tensor<float>::zeros({h, w});
          auto pv = plane.mutable_data();
          const i64 base = ((s * l + k) * c + ch) * h * w;
          std::copy_n(fv.data() + base, h * w, pv.data());
          stob::write_pgm(a.render + "/s" + std::to_string(s) + "_f" +
                              std::to_string(k) + "_c" + std::to_string(ch) +
                              "_pf.pgm",
                          plane);
        }
      }
    }
    std::cout << "rendered frames under " << a.render << "\n";
  }
  return kOk;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  std::string csv;
  std::string render;
  std::vector<double> thresholds{5.0, 20.0, 40.0};
  i64 horizon = 0;
  bool bound = false;
  i64 bound_n = 0;
  double bound_eta = 1.0;
  double bound_m = 1.0;
  double bound_delta = 0.05;
  double bound_xfro = 0.0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  stob::ExperimentConfig cfg = stob::read_checkpoint_config(a.ckpt);
  stob::ObserverModel<float> model(cfg.observer_config(), cfg.seed);
  stob::load_checkpoint<float>(a.ckpt, model, nullptr);

  stob::SequenceData<float> ds = stob::read_dataset<float>(a.input);
  const i64 horizon = a.horizon > 0 ? a.horizon : cfg.data.t_out;
  auto [y_in, truth] = stob::split_time(ds.frames, cfg.data.t_in, horizon);
  stob::Rollout<float> rollout = model.forecast_sequence(nullptr, y_in, horizon);

  stob::MetricsReport report;
  report.config_hash = cfg.config_hash_hex();
  report.frames = stob::frame_metrics(rollout.frames, truth);

  if (!a.thresholds.empty()) {
    stob::Tensor<float> pred_dbz = stob::to_dbz(rollout.frames);
    stob::Tensor<float> truth_dbz = stob::to_dbz(truth);
    for (double t : a.thresholds) {
      stob::ConfusionCounts counts = stob::confusion_counts(pred_dbz, truth_dbz, t);
      stob::SkillScore h = stob::hss(counts);
      stob::SkillScore c = stob::csi(counts);
      stob::ThresholdScores scores;
      scores.hss = h.value;
      scores.csi = c.value;
      scores.hss_degenerate = h.degenerate;
      scores.csi_degenerate = c.degenerate;
      report.thresholds[threshold_key(t)] = scores;
    }
  }

  if (a.bound) {
    const double xfro = a.bound_xfro > 0 ? a.bound_xfro : tensor_frobenius(y_in);
    const i64 n = a.bound_n > 0 ? a.bound_n : ds.samples();
    stob::BoundInputs inputs = stob::collect_bound_inputs(
        model, xfro, n, a.bound_eta, a.bound_m, a.bound_delta);
    report.bound = stob::bound_diagnostics(inputs);
  }

  stob::emit_report_json(report, a.out);
  if (!a.csv.empty()) stob::emit_report_csv(report, a.csv);
  if (!a.render.empty()) stob::render_frames(truth, rollout.frames, a.render);

  std::cout << "frames " << horizon << "  MSE " << fmt(report.frames.mean_mse)
            << "  MAE " << fmt(report.frames.mean_mae) << "  SSIM "
            << fmt(report.frames.mean_ssim) << "\n";
  for (const auto& [key, scores] : report.thresholds) {
    std::cout << "threshold " << key << " dBZ  HSS " << fmt(scores.hss)
              << "  CSI " << fmt(scores.csi) << "\n";
  }
  if (report.bound.has_value()) {
    std::cout << "bound  R_S " << fmt(report.bound->r_s) << "  R_V "
              << fmt(report.bound->r_v) << "  R " << fmt(report.bound->r)
              << "  term " << fmt(report.bound->rademacher_term) << "\n";
  }
  std::cout << "report: " << a.out << "\n";
  return kOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  double eps = 1e-5;
  double tol = 1e-5;
  i64 coords = 3;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  stob::ObserverConfig cfg = micro_config();
  stob::ObserverModel<double> model(cfg, a.seed);

  stob::Rng rng(stob::mix_seed(a.seed, kGradcheckStream));
  stob::Tensor<double> y_in =
      stob::Tensor<double>::zeros({2, cfg.t_in, cfg.channels, cfg.height, cfg.width});
  stob::Tensor<double> y_out = stob::Tensor<double>::zeros(
      {2, cfg.t_out, cfg.channels, cfg.height, cfg.width});
  stob::fill_uniform(y_in, rng, 0.0, 1.0);
  stob::fill_uniform(y_out, rng, 0.0, 1.0);

  stob::LossWeights weights;
  weights.lambda0 = 1.0;
  weights.lambda1 = 1.0;
  weights.lambda2 = 1.0;
  weights.lambda3 = 1.0;

  // The latent targets are treated as constants by the loss (their gradient
  // path is cut), so they must be frozen here: recomputing them inside the
  // closure would let the finite differences see them move with the weights.
  const std::vector<stob::LatentTriplet<double>> targets =
      model.latent_targets(y_out);

  auto loss_fn = [&](stob::Tape<double>* tape) {
    stob::Rollout<double> rollout = model.forecast_sequence(tape, y_in, cfg.t_out);
    std::vector<stob::LatentTriplet<double>> pred;
    for (const auto& step : rollout.steps) {
      if (step.kept) pred.push_back(step.predicted);
    }
    return stob::compute_losses<double>(tape, rollout.frames, y_out, pred, targets,
                                        weights)
        .total;
  };

  std::vector<stob::Parameter<double>*> params = model.parameters();
  stob::GradCheckResult result =
      stob::finite_diff_check(loss_fn, params, a.eps, a.coords, a.seed);

  std::cout << "checked " << result.coords_checked << " coordinates across "
            << params.size() << " parameters\n"
            << "max relative error " << fmt(result.max_rel_error, 3) << " at "
            << result.worst_param << "[" << result.worst_index << "] (analytic "
            << fmt(result.analytic_at_worst) << ", numeric "
            << fmt(result.numeric_at_worst) << ")\n";
  if (result.max_rel_error < a.tol) {
    std::cout << "gradients OK (tolerance " << fmt(a.tol, 3) << ")\n";
    return kOk;
  }
  std::cout << "gradients FAIL (tolerance " << fmt(a.tol, 3) << ")\n";
  return kCheckFailed;
}

// ---- convergence ------------------------------------------------------------

struct ConvergenceArgs {
  i64 models = 20;
  i64 steps = 50;
  std::uint64_t seed = 0;
  std::string constraint = "sigmoid";
};

int cmd_convergence(const ConvergenceArgs& a) {
  stob::ObserverConfig cfg = micro_config();
  cfg.a_constraint = stob::a_constraint_from_string(a.constraint);
  const auto [lat_h, lat_w] = cfg.latent_extent();

  bool all_ok = true;
  for (i64 m = 0; m < a.models; ++m) {
    stob::ObserverModel<double> model(cfg, stob::mix_seed(a.seed, m));
    stob::Rng rng(stob::mix_seed(a.seed, kConvergenceStream + m));

    stob::Tensor<double> xi_a = stob::Tensor<double>::zeros({1, cfg.c_t, lat_h, lat_w});
    stob::Tensor<double> xi_b = stob::Tensor<double>::zeros({1, cfg.c_t, lat_h, lat_w});
    stob::fill_normal(xi_a, rng, 0.0, 1.0);
    stob::fill_normal(xi_b, rng, 0.0, 1.0);
    std::vector<stob::Tensor<double>> xs;
    for (int i = 0; i < 3; ++i) {
      stob::Tensor<double> x = stob::Tensor<double>::zeros({1, cfg.c_s, lat_h, lat_w});
      stob::fill_normal(x, rng, 0.0, 1.0);
      xs.push_back(x);
    }

    std::vector<double> curve =
        stob::latent_error_decay<double>(model, xi_a, xi_b, xs, a.steps);
    const double max_a = model.max_effective_a();
    double worst_ratio = 0.0;
    i64 worst_k = 0;
    bool ok = true;
    for (i64 k = 1; k <= a.steps; ++k) {
      const double envelope = std::pow(max_a, static_cast<double>(k)) * curve[0];
      const double ratio = envelope > 0 ? curve[static_cast<std::size_t>(k)] / envelope
                                        : (curve[static_cast<std::size_t>(k)] > 0 ? 2.0 : 0.0);
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst_k = k;
      }
      if (curve[static_cast<std::size_t>(k)] > envelope) ok = false;
    }
    std::cout << "model " << std::setw(2) << m << "  max A " << fmt(max_a)
              << "  worst ratio " << fmt(worst_ratio) << " at k=" << worst_k
              << (ok ? "  decay OK" : "  decay VIOLATED") << "\n";
    all_ok = all_ok && ok;
  }
  if (!all_ok) {
    std::cout << "geometric envelope violated\n";
    return kCheckFailed;
  }
  std::cout << "all " << a.models << " models satisfy the geometric envelope\n";
  return kOk;
}

// ---- bound ------------------------------------------------------------------

struct BoundArgs {
  std::string ckpt;
  std::string out;
  i64 n = 1;
  double eta = 1.0;
  double m = 1.0;
  double delta = 0.05;
  double xfro = 1.0;
};

int cmd_bound(const BoundArgs& a) {
  stob::ExperimentConfig cfg = stob::read_checkpoint_config(a.ckpt);
  stob::ObserverModel<float> model(cfg.observer_config(), cfg.seed);
  stob::load_checkpoint<float>(a.ckpt, model, nullptr);

  stob::BoundInputs inputs =
      stob::collect_bound_inputs(model, a.xfro, a.n, a.eta, a.m, a.delta);
  stob::BoundDiagnostics diag = stob::bound_diagnostics(inputs);

  std::cout << "L_S " << diag.l_s << "  stem product " << fmt(diag.stem_product)
            << "  capacity sum " << fmt(diag.capacity_sum) << "\n"
            << "R_S " << fmt(diag.r_s) << "  R_V " << fmt(diag.r_v) << "  R "
            << fmt(diag.r) << "\n"
            << "rademacher term " << fmt(diag.rademacher_term) << "  bound gap "
            << fmt(diag.bound_gap_term) << "\n";

  if (!a.out.empty()) {
    nlohmann::json j = {{"R_S", diag.r_s},
                        {"R_V", diag.r_v},
                        {"R", diag.r},
                        {"term", diag.rademacher_term},
                        {"gap", diag.bound_gap_term},
                        {"stem_product", diag.stem_product},
                        {"capacity_sum", diag.capacity_sum},
                        {"a_capacity", diag.a_capacity},
                        {"L_S", diag.l_s}};
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw stob::IoError("cannot open \"" + a.out + "\"");
    out << j.dump(2) << '\n';
    if (!out) throw stob::IoError("write failed for \"" + a.out + "\"");
    std::cout << "diagnostics: " << a.out << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  stob::apply_thread_cap_from_env();

  CLI::App app{"spatiotemporal observer forecasting toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "synthesize a sequence dataset");
  generate->add_option("--kind", gen.kind, "sprite kind")
      ->check(CLI::IsMember({"digits", "blobs"}))
      ->capture_default_str();
  generate->add_option("--n", gen.n, "number of sequences")->required();
  generate->add_option("--t", gen.t, "frames per sequence")->required();
  generate->add_option("--hw", gen.hw, "square frame extent")->capture_default_str();
  generate->add_option("--objects", gen.objects, "sprites per sequence")
      ->capture_default_str();
  generate->add_option("--sprite", gen.sprite, "sprite extent in pixels")
      ->capture_default_str();
  generate->add_option("--min-speed", gen.min_speed, "minimum speed (px/frame)")
      ->capture_default_str();
  generate->add_option("--max-speed", gen.max_speed, "maximum speed (px/frame)")
      ->capture_default_str();
  generate->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  generate->add_option("--out", gen.out, "output dataset file")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config");
  train_cmd->add_option("--config", train.config, "experiment config JSON");
  train_cmd->add_option("--data", train.data, "training dataset (overrides data.path)");
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--resume", train.resume,
                        "checkpoint to continue from (config defaults to its "
                        "embedded one)");
  train_cmd->add_option("--epochs", train.epochs_override,
                        "override the configured epoch count");

  PredictArgs pred;
  CLI::App* predict = app.add_subcommand("predict", "roll a trained model forward");
  predict->add_option("--ckpt", pred.ckpt, "model checkpoint")->required();
  predict->add_option("--input", pred.input, "input dataset")->required();
  predict->add_option("--out", pred.out, "predictions dataset file")->required();
  predict->add_option("--horizon", pred.horizon,
                      "frames to forecast (default: configured t_out)");
  predict->add_option("--render", pred.render, "directory for PGM frame dumps");

  EvaluateArgs eval;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score forecasts against truth");
  evaluate->add_option("--ckpt", eval.ckpt, "model checkpoint")->required();
  evaluate->add_option("--input", eval.input, "dataset with t_in + horizon frames")
      ->required();
  evaluate->add_option("--out", eval.out, "report JSON path")->required();
  evaluate->add_option("--csv", eval.csv, "per-frame CSV path");
  evaluate->add_option("--render", eval.render, "directory for GT/PF/diff PGM dumps");
  evaluate->add_option("--thresholds", eval.thresholds, "dBZ skill thresholds")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--horizon", eval.horizon,
                       "frames to score (default: configured t_out)");
  evaluate->add_flag("--bound", eval.bound, "include capacity diagnostics");
  evaluate->add_option("--bound-n", eval.bound_n,
                       "training sample count (default: evaluated samples)");
  evaluate->add_option("--bound-eta", eval.bound_eta, "loss Lipschitz constant")
      ->capture_default_str();
  evaluate->add_option("--bound-m", eval.bound_m, "loss upper bound")
      ->capture_default_str();
  evaluate->add_option("--bound-delta", eval.bound_delta, "confidence level")
      ->capture_default_str();
  evaluate->add_option("--bound-xfro", eval.bound_xfro,
                       "input Frobenius norm (default: computed)");

  GradcheckArgs grad;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check on a micro model");
  gradcheck->add_option("--eps", grad.eps, "difference step")->capture_default_str();
  gradcheck->add_option("--tol", grad.tol, "max relative error accepted")
      ->capture_default_str();
  gradcheck->add_option("--coords", grad.coords,
                        "coordinates probed per parameter (0 = all)")
      ->capture_default_str();
  gradcheck->add_option("--seed", grad.seed, "model/data seed")->capture_default_str();

  ConvergenceArgs conv;
  CLI::App* convergence =
      app.add_subcommand("convergence", "assert the latent geometric decay envelope");
  convergence->add_option("--models", conv.models, "seeded models to test")
      ->capture_default_str();
  convergence->add_option("--steps", conv.steps, "decay steps per model")
      ->capture_default_str();
  convergence->add_option("--seed", conv.seed, "base seed")->capture_default_str();
  convergence->add_option("--constraint", conv.constraint, "coefficient constraint")
      ->check(CLI::IsMember({"sigmoid", "clamp", "none"}))
      ->capture_default_str();

  BoundArgs bound;
  CLI::App* bound_cmd =
      app.add_subcommand("bound", "capacity diagnostics of a checkpoint");
  bound_cmd->add_option("--ckpt", bound.ckpt, "model checkpoint")->required();
  bound_cmd->add_option("--out", bound.out, "diagnostics JSON path");
  bound_cmd->add_option("--n", bound.n, "training sample count")->capture_default_str();
  bound_cmd->add_option("--eta", bound.eta, "loss Lipschitz constant")
      ->capture_default_str();
  bound_cmd->add_option("--m", bound.m, "loss upper bound")->capture_default_str();
  bound_cmd->add_option("--delta", bound.delta, "confidence level")
      ->capture_default_str();
  bound_cmd->add_option("--xfro", bound.xfro, "input Frobenius norm")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (train_cmd->parsed()) {
      if (train.config.empty() && train.resume.empty()) {
        std::cerr << "train: pass --config (or --resume)\n";
        return kUsageError;
      }
      return cmd_train(train);
    }
    if (predict->parsed()) return cmd_predict(pred);
    if (evaluate->parsed()) return cmd_evaluate(eval);
    if (gradcheck->parsed()) return cmd_gradcheck(grad);
    if (convergence->parsed()) return cmd_convergence(conv);
    if (bound_cmd->parsed()) return cmd_bound(bound);
  } catch (const stob::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const stob::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
