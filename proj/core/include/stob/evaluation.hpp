#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stob/observer.hpp"
#include "stob/spectral.hpp"
#include "stob/tensor.hpp"

namespace stob {

// ---- pixel metrics --------------------------------------------------------

/// Per-frame and aggregate error metrics over (N, L, C, H, W) forecasts:
/// each per-frame value averages over samples, channels and pixels; the
/// aggregate is the mean over frames.
struct FrameMetrics {
  std::vector<double> mse;
  std::vector<double> mae;
  std::vector<double> ssim;
  double mean_mse = 0.0;
  double mean_mae = 0.0;
  double mean_ssim = 0.0;
  bool ssim_global_fallback = false;
};

template <typename T>
FrameMetrics frame_metrics(const Tensor<T>& pred, const Tensor<T>& truth,
                           double dynamic_range = 1.0);

/// Structural similarity of two single-channel frames (H, W): mean local
/// SSIM under an 11x11 Gaussian window (sigma 1.5, K1 = 0.01, K2 = 0.03),
/// valid positions only. Frames smaller than the window fall back to
/// global statistics and set the flag.
struct SsimResult {
  double value = 0.0;
  bool global_fallback = false;
};

template <typename T>
SsimResult ssim(const Tensor<T>& pred_frame, const Tensor<T>& truth_frame,
                double dynamic_range = 1.0);

// ---- categorical skill ----------------------------------------------------

/// Radar reflectivity from a pixel value in [0, 255]: dBZ = p * 95/255 - 10.
double dbz_transform(double p);

/// Maps normalized [0, 1] frames through dbz_transform(255 * v).
template <typename T>
Tensor<T> to_dbz(const Tensor<T>& normalized);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fn + fp + tn; }
};

/// Binarizes both fields at `threshold` (>= threshold counts as an event)
/// and pools every pixel.
template <typename T>
ConfusionCounts confusion_counts(const Tensor<T>& pred, const Tensor<T>& truth,
                                 double threshold);

/// A skill score with its degenerate-denominator flag; degenerate cases
/// yield 0 rather than NaN.
struct SkillScore {
  double value = 0.0;
  bool degenerate = false;
};

/// Heidke skill score: 2(TP*TN - FN*FP) / ((TP+FN)(FN+TN) + (TP+FP)(FP+TN)).
SkillScore hss(const ConfusionCounts& counts);

/// Critical success index: TP / (TP + FN + FP).
SkillScore csi(const ConfusionCounts& counts);

// ---- generalization-bound diagnostics --------------------------------------

/// Norm and geometry summary of one convolution-like layer.
struct LayerBound {
  double a = 0.0;    // Frobenius norm bound of the kernel
  double s = 0.0;    // spectral norm bound of the induced linear map
  double rho = 1.0;  // Lipschitz constant of the following activation
  double c = 0.0;    // kernel count (output channels)
  double r = 0.0;    // per-kernel element count (in_channels * kh * kw)
  double d = 0.0;    // output dimension per sample
};

/// Everything the capacity formulas consume. `stem` lists the main-path
/// layers in forward order WITHOUT the elementwise coefficient layer, which
/// enters through (d_a, a_a, s_a, rho_a); the first n_s stem entries form
/// the encoder prefix shared with the vine.
struct BoundInputs {
  std::vector<LayerBound> stem;
  double d_a = 0.0;
  double a_a = 0.0;
  double s_a = 0.0;
  double rho_a = 1.0;
  bool has_vine = true;
  LayerBound vine;
  std::int64_t n_s = 0;
  double x_fro = 1.0;      // Frobenius norm of the training inputs
  std::int64_t n = 1;      // training sample count
  double eta = 1.0;        // loss Lipschitz constant
  double m_bound = 1.0;    // loss upper bound
  double delta = 0.05;     // confidence level

  void validate() const;
};

/// Capacity terms:
///   R_S  = 2 * (prod over all L_S layers of rho_i s_i)
///            * (d_A^4 a_A / s_A + sum over non-final layers of
///               c_i^2 r_i^2 a_i sqrt(d_i / c_i) / s_i) * L_S^2
///   R_V  = 2 * (prod over the encoder prefix of rho_i s_i)
///            * rho_B c_B^2 r_B^2 a_B sqrt(d_B / c_B)
///   R    = (sqrt(R_S) + sqrt(R_V))^2
///   rademacher_term = 16 n^{-5/8} (x_fro * R / eta)^{1/4}
///   bound_gap_term  = 2 * rademacher_term + M sqrt(log(1/delta) / (2n))
/// Ratio terms a_i / s_i with s_i = 0 contribute 0 (a zero layer has zero
/// capacity). Diagnostic only.
struct BoundDiagnostics {
  double r_s = 0.0;
  double r_v = 0.0;
  double r = 0.0;
  double rademacher_term = 0.0;
  double bound_gap_term = 0.0;
  double stem_product = 0.0;   // prod of rho_i s_i over all L_S layers
  double capacity_sum = 0.0;   // the parenthesized sum, coefficient term included
  double a_capacity = 0.0;     // the coefficient layer's own term
  std::int64_t l_s = 0;        // total stem depth (coefficient layer included)
};

BoundDiagnostics bound_diagnostics(const BoundInputs& inputs);

/// Collapses an inception block into the single equivalent kernel
/// (out, in, 11, 11): entry and branch kernels composed, branches
/// zero-padded to the widest kernel. For linear blocks,
/// conv2d(x, merged, pad 5) reproduces forward(x) exactly.
template <typename T>
Tensor<T> merged_inception_kernel(const InceptionBlock<T>& block);

/// Measures every layer of a model (Frobenius norms directly, spectral
/// norms by power iteration, inception blocks merged) and packages the
/// capacity inputs. x_fro/n/eta/m_bound/delta describe the training set and
/// loss.
template <typename T>
BoundInputs collect_bound_inputs(const ObserverModel<T>& model, double x_fro,
                                 std::int64_t n, double eta, double m_bound,
                                 double delta);

// ---- reports and frame dumps -----------------------------------------------

struct ThresholdScores {
  double hss = 0.0;
  double csi = 0.0;
  bool hss_degenerate = false;
  bool csi_degenerate = false;
};

/// Full evaluation report; thresholds are keyed by their dBZ value rendered
/// as a decimal string.
struct MetricsReport {
  std::string config_hash;
  FrameMetrics frames;
  std::map<std::string, ThresholdScores> thresholds;
  std::optional<BoundDiagnostics> bound;
};

/// JSON schema: {config_hash, per_frame:{mse,mae,ssim}, aggregate:{...},
/// thresholds:{"5":{hss,csi},...}, bound:{R_S,R_V,R,term}}.
void emit_report_json(const MetricsReport& report, const std::string& path);
MetricsReport load_report_json(const std::string& path);

/// CSV companion: one row per frame, `frame,mse,mae,ssim`.
void emit_report_csv(const MetricsReport& report, const std::string& path);

/// Binary PGM (P5, maxval 255) dump of one (H, W) frame with values in
/// [0, 1]; out-of-range values saturate.
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& frame);

/// Dumps ground truth, prediction and |GT-PF| difference maps for every
/// (sample, frame, channel) as PGM files named
/// `s<sample>_f<frame>_c<channel>_{gt,pf,diff}.pgm` under `dir`.
template <typename T>
void render_frames(const Tensor<T>& truth, const Tensor<T>& pred,
                   const std::string& dir);

}  // namespace stob
