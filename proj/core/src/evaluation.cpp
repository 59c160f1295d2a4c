#include "stob/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stob/errors.hpp"
#include "stob/ops.hpp"

namespace stob {

namespace {

using i64 = std::int64_t;
using nlohmann::json;

constexpr i64 kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

const std::array<double, kSsimWindow * kSsimWindow>& ssim_weights() {
  static const auto weights = [] {
    std::array<double, kSsimWindow * kSsimWindow> w{};
    const double inv = 1.0 / (2.0 * kSsimSigma * kSsimSigma);
    double sum = 0.0;
    for (i64 i = 0; i < kSsimWindow; ++i) {
      for (i64 j = 0; j < kSsimWindow; ++j) {
        const double di = static_cast<double>(i - kSsimWindow / 2);
        const double dj = static_cast<double>(j - kSsimWindow / 2);
        w[static_cast<std::size_t>(i * kSsimWindow + j)] =
            std::exp(-(di * di + dj * dj) * inv);
        sum += w[static_cast<std::size_t>(i * kSsimWindow + j)];
      }
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return weights;
}

double ssim_from_stats(double mu_x, double mu_y, double var_x, double var_y,
                       double cov, double dynamic_range) {
  const double c1 = (kSsimK1 * dynamic_range) * (kSsimK1 * dynamic_range);
  const double c2 = (kSsimK2 * dynamic_range) * (kSsimK2 * dynamic_range);
  const double num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
  const double den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
  return num / den;
}

/// SSIM of one (h, w) plane given raw row-major pointers.
template <typename T>
double ssim_plane(const T* a, const T* b, i64 h, i64 w, double dynamic_range,
                  bool& used_global) {
  if (h < kSsimWindow || w < kSsimWindow) {
    used_global = true;
    double mu_x = 0.0, mu_y = 0.0;
    const i64 count = h * w;
    for (i64 i = 0; i < count; ++i) {
      mu_x += static_cast<double>(a[i]);
      mu_y += static_cast<double>(b[i]);
    }
    mu_x /= static_cast<double>(count);
    mu_y /= static_cast<double>(count);
    double var_x = 0.0, var_y = 0.0, cov = 0.0;
    for (i64 i = 0; i < count; ++i) {
      const double dx = static_cast<double>(a[i]) - mu_x;
      const double dy = static_cast<double>(b[i]) - mu_y;
      var_x += dx * dx;
      var_y += dy * dy;
      cov += dx * dy;
    }
    var_x /= static_cast<double>(count);
    var_y /= static_cast<double>(count);
    cov /= static_cast<double>(count);
    return ssim_from_stats(mu_x, mu_y, var_x, var_y, cov, dynamic_range);
  }

  const auto& weights = ssim_weights();
  double total = 0.0;
  i64 windows = 0;
  for (i64 y = 0; y + kSsimWindow <= h; ++y) {
    for (i64 x = 0; x + kSsimWindow <= w; ++x) {
      double mu_x = 0.0, mu_y = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (i64 i = 0; i < kSsimWindow; ++i) {
        const T* ra = a + (y + i) * w + x;
        const T* rb = b + (y + i) * w + x;
        const double* wr = weights.data() + i * kSsimWindow;
        for (i64 j = 0; j < kSsimWindow; ++j) {
          const double va = static_cast<double>(ra[j]);
          const double vb = static_cast<double>(rb[j]);
          const double wt = wr[j];
          mu_x += wt * va;
          mu_y += wt * vb;
          xx += wt * va * va;
          yy += wt * vb * vb;
          xy += wt * va * vb;
        }
      }
      total += ssim_from_stats(mu_x, mu_y, xx - mu_x * mu_x, yy - mu_y * mu_y,
                               xy - mu_x * mu_y, dynamic_range);
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

template <typename T>
double frobenius(const Tensor<T>& t) {
  double acc = 0.0;
  for (T v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

/// Capacity ratio a / s with the zero-layer convention a/0 := 0.
double ratio_or_zero(double a, double s) { return s == 0.0 ? 0.0 : a / s; }

}  // namespace

template <typename T>
FrameMetrics frame_metrics(const Tensor<T>& pred, const Tensor<T>& truth,
                           double dynamic_range) {
  require_same_shape(pred.shape(), truth.shape(), "frame_metrics");
  if (pred.rank() != 5) {
    throw ShapeError("frame_metrics: expected (N, L, C, H, W), got " +
                     shape_str(pred.shape()));
  }
  if (!(dynamic_range > 0)) {
    throw ConfigError("frame_metrics: dynamic range must be positive");
  }
  const i64 n = pred.dim(0), l = pred.dim(1), c = pred.dim(2);
  const i64 h = pred.dim(3), w = pred.dim(4);
  const i64 plane = h * w;
  auto pv = pred.data();
  auto tv = truth.data();

  FrameMetrics out;
  out.mse.resize(static_cast<std::size_t>(l));
  out.mae.resize(static_cast<std::size_t>(l));
  out.ssim.resize(static_cast<std::size_t>(l));
  for (i64 k = 0; k < l; ++k) {
    double se = 0.0, ae = 0.0, ss = 0.0;
    for (i64 s = 0; s < n; ++s) {
      for (i64 ch = 0; ch < c; ++ch) {
        const i64 base = ((s * l + k) * c + ch) * plane;
        const T* pp = pv.data() + base;
        const T* tp = tv.data() + base;
        for (i64 i = 0; i < plane; ++i) {
          const double d = static_cast<double>(pp[i]) - static_cast<double>(tp[i]);
          se += d * d;
          ae += std::abs(d);
        }
        ss += ssim_plane(pp, tp, h, w, dynamic_range, out.ssim_global_fallback);
      }
    }
    const double pixels = static_cast<double>(n * c * plane);
    out.mse[static_cast<std::size_t>(k)] = se / pixels;
    out.mae[static_cast<std::size_t>(k)] = ae / pixels;
    out.ssim[static_cast<std::size_t>(k)] = ss / static_cast<double>(n * c);
  }
  for (i64 k = 0; k < l; ++k) {
    out.mean_mse += out.mse[static_cast<std::size_t>(k)];
    out.mean_mae += out.mae[static_cast<std::size_t>(k)];
    out.mean_ssim += out.ssim[static_cast<std::size_t>(k)];
  }
  out.mean_mse /= static_cast<double>(l);
  out.mean_mae /= static_cast<double>(l);
  out.mean_ssim /= static_cast<double>(l);
  return out;
}

template <typename T>
SsimResult ssim(const Tensor<T>& pred_frame, const Tensor<T>& truth_frame,
                double dynamic_range) {
  require_same_shape(pred_frame.shape(), truth_frame.shape(), "ssim");
  if (pred_frame.rank() != 2) {
    throw ShapeError("ssim: expected a single (H, W) plane, got " +
                     shape_str(pred_frame.shape()));
  }
  if (!(dynamic_range > 0)) {
    throw ConfigError("ssim: dynamic range must be positive");
  }
  SsimResult out;
  out.value = ssim_plane(pred_frame.data().data(), truth_frame.data().data(),
                         pred_frame.dim(0), pred_frame.dim(1), dynamic_range,
                         out.global_fallback);
  return out;
}

double dbz_transform(double p) {
  if (p < 0.0 || p > 255.0) {
    throw ConfigError("dbz_transform: pixel value " + std::to_string(p) +
                      " outside [0, 255]");
  }
  return p * 95.0 / 255.0 - 10.0;
}

template <typename T>
Tensor<T> to_dbz(const Tensor<T>& normalized) {
  Tensor<T> out = normalized.clone();
  for (T& v : out.mutable_data()) {
    const double p = std::clamp(static_cast<double>(v) * 255.0, 0.0, 255.0);
    v = static_cast<T>(dbz_transform(p));
  }
  return out;
}

template <typename T>
ConfusionCounts confusion_counts(const Tensor<T>& pred, const Tensor<T>& truth,
                                 double threshold) {
  require_same_shape(pred.shape(), truth.shape(), "confusion_counts");
  auto pv = pred.data();
  auto tv = truth.data();
  ConfusionCounts counts;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool p = static_cast<double>(pv[i]) >= threshold;
    const bool t = static_cast<double>(tv[i]) >= threshold;
    if (p && t) {
      ++counts.tp;
    } else if (!p && t) {
      ++counts.fn;
    } else if (p && !t) {
      ++counts.fp;
    } else {
      ++counts.tn;
    }
  }
  return counts;
}

SkillScore hss(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fn = static_cast<double>(c.fn);
  const double fp = static_cast<double>(c.fp), tn = static_cast<double>(c.tn);
  const double den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  if (den == 0.0) return {0.0, true};
  return {2.0 * (tp * tn - fn * fp) / den, false};
}

SkillScore csi(const ConfusionCounts& c) {
  const double den = static_cast<double>(c.tp + c.fn + c.fp);
  if (den == 0.0) return {0.0, true};
  return {static_cast<double>(c.tp) / den, false};
}

void BoundInputs::validate() const {
  if (stem.empty()) throw ConfigError("bound inputs: empty stem layer list");
  auto check_layer = [](const LayerBound& l, const std::string& name) {
    if (!(l.c > 0) || !(l.r > 0) || !(l.d > 0)) {
      throw ConfigError("bound inputs: missing geometry for " + name);
    }
    if (l.a < 0 || l.s < 0 || !(l.rho > 0)) {
      throw ConfigError("bound inputs: invalid norms for " + name);
    }
  };
  for (std::size_t i = 0; i < stem.size(); ++i) {
    check_layer(stem[i], "stem layer " + std::to_string(i));
  }
  if (has_vine) check_layer(vine, "vine");
  if (!(d_a > 0) || a_a < 0 || s_a < 0 || !(rho_a > 0)) {
    throw ConfigError("bound inputs: invalid coefficient-layer values");
  }
  if (n_s < 0 || n_s > static_cast<i64>(stem.size())) {
    throw ConfigError("bound inputs: encoder prefix length out of range");
  }
  if (n < 1) throw ConfigError("bound inputs: sample count must be >= 1");
  if (!(eta > 0) || !(m_bound > 0)) {
    throw ConfigError("bound inputs: eta and M must be positive");
  }
  if (!(delta > 0) || !(delta < 1)) {
    throw ConfigError("bound inputs: confidence delta must lie in (0, 1)");
  }
  if (x_fro < 0) throw ConfigError("bound inputs: negative input norm");
}

BoundDiagnostics bound_diagnostics(const BoundInputs& in) {
  in.validate();
  BoundDiagnostics out;
  out.l_s = static_cast<i64>(in.stem.size()) + 1;

  out.stem_product = in.rho_a * in.s_a;
  for (const LayerBound& l : in.stem) out.stem_product *= l.rho * l.s;

  out.a_capacity = in.d_a * in.d_a * in.d_a * in.d_a * ratio_or_zero(in.a_a, in.s_a);
  out.capacity_sum = out.a_capacity;
  // The final stem layer is excluded from the capacity sum.
  for (std::size_t i = 0; i + 1 < in.stem.size(); ++i) {
    const LayerBound& l = in.stem[i];
    out.capacity_sum +=
        l.c * l.c * l.r * l.r * std::sqrt(l.d / l.c) * ratio_or_zero(l.a, l.s);
  }

  const double ls = static_cast<double>(out.l_s);
  out.r_s = 2.0 * out.stem_product * out.capacity_sum * ls * ls;

  if (in.has_vine) {
    double encoder_product = 1.0;
    for (i64 i = 0; i < in.n_s; ++i) {
      encoder_product *= in.stem[static_cast<std::size_t>(i)].rho *
                         in.stem[static_cast<std::size_t>(i)].s;
    }
    const LayerBound& b = in.vine;
    out.r_v = 2.0 * encoder_product * b.rho * b.c * b.c * b.r * b.r * b.a *
              std::sqrt(b.d / b.c);
  }

  out.r = (std::sqrt(out.r_s) + std::sqrt(out.r_v)) * (std::sqrt(out.r_s) + std::sqrt(out.r_v));
  const double nd = static_cast<double>(in.n);
  out.rademacher_term =
      16.0 * std::pow(nd, -0.625) * std::pow(in.x_fro * out.r / in.eta, 0.25);
  out.bound_gap_term = 2.0 * out.rademacher_term +
                       in.m_bound * std::sqrt(std::log(1.0 / in.delta) / (2.0 * nd));
  return out;
}

template <typename T>
Tensor<T> merged_inception_kernel(const InceptionBlock<T>& block) {
  const Tensor<T>& entry = block.entry_weight.value;
  const i64 c_mid = entry.dim(0), c_in = entry.dim(1);
  const i64 c_out = block.branch_weight[0].value.dim(0);
  const i64 k_max = kInceptionKernels.back();

  Tensor<T> merged = Tensor<T>::zeros({c_out, c_in, k_max, k_max});
  auto mv = merged.mutable_data();
  auto ev = entry.data();
  for (std::size_t bi = 0; bi < kInceptionKernels.size(); ++bi) {
    const Tensor<T>& branch = block.branch_weight[bi].value;
    const i64 k = kInceptionKernels[bi];
    const i64 off = (k_max - k) / 2;
    auto bv = branch.data();
    for (i64 o = 0; o < c_out; ++o) {
      for (i64 i = 0; i < c_in; ++i) {
        for (i64 m = 0; m < c_mid; ++m) {
          const T mix = ev[static_cast<std::size_t>(m * c_in + i)];
          if (mix == T(0)) continue;
          const T* src = bv.data() + (o * c_mid + m) * k * k;
          T* dst = mv.data() + ((o * c_in + i) * k_max + off) * k_max + off;
          for (i64 u = 0; u < k; ++u) {
            for (i64 v = 0; v < k; ++v) dst[u * k_max + v] += src[u * k + v] * mix;
          }
        }
      }
    }
  }
  return merged;
}

template <typename T>
BoundInputs collect_bound_inputs(const ObserverModel<T>& model, double x_fro,
                                 std::int64_t n, double eta, double m_bound,
                                 double delta) {
  const ObserverConfig& cfg = model.config();
  const auto strides = cfg.encoder_strides();
  const auto [lat_h, lat_w] = cfg.latent_extent();

  BoundInputs in;
  in.x_fro = x_fro;
  in.n = n;
  in.eta = eta;
  in.m_bound = m_bound;
  in.delta = delta;
  in.n_s = cfg.n_s;

  auto conv_layer = [](const Tensor<T>& w, i64 in_h, i64 in_w, i64 stride,
                       i64 padding, i64 out_h, i64 out_w) {
    LayerBound l;
    l.a = frobenius(w);
    l.s = spectral_norm(w, ConvGeometry{in_h, in_w, stride, padding}).value;
    l.rho = 1.0;  // leaky rectifier slope in [0, 1)
    l.c = static_cast<double>(w.dim(0));
    l.r = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
    l.d = static_cast<double>(w.dim(0) * out_h * out_w);
    return l;
  };

  // Encoder blocks, tracking spatial extents.
  i64 h = cfg.height, w = cfg.width;
  std::vector<std::pair<i64, i64>> extents{{h, w}};
  for (i64 i = 0; i < cfg.n_s; ++i) {
    const i64 s = strides[static_cast<std::size_t>(i)];
    const i64 oh = conv_out_extent(h, 3, s, 1);
    const i64 ow = conv_out_extent(w, 3, s, 1);
    in.stem.push_back(conv_layer(model.encoder[static_cast<std::size_t>(i)].weight.value,
                                 h, w, s, 1, oh, ow));
    h = oh;
    w = ow;
    extents.emplace_back(h, w);
  }

  auto inception_layer = [&](const InceptionBlock<T>& block) {
    Tensor<T> merged = merged_inception_kernel(block);
    return conv_layer(merged, lat_h, lat_w, 1, (kInceptionKernels.back() - 1) / 2,
                      lat_h, lat_w);
  };
  for (const InceptionBlock<T>& b : model.h_inv) in.stem.push_back(inception_layer(b));
  for (const InceptionBlock<T>& b : model.t_fwd) in.stem.push_back(inception_layer(b));

  // The elementwise coefficient layer: a diagonal map on the flattened
  // latent, so the Frobenius norm is the vector norm and the spectral norm
  // the largest magnitude.
  Tensor<T> a_eff = model.effective_a(nullptr);
  in.d_a = static_cast<double>(a_eff.size());
  in.a_a = frobenius(a_eff);
  double a_max = 0.0;
  for (T v : a_eff.data()) a_max = std::max(a_max, std::abs(static_cast<double>(v)));
  in.s_a = a_max;
  in.rho_a = 1.0;

  for (const InceptionBlock<T>& b : model.t_inv) in.stem.push_back(inception_layer(b));
  for (const InceptionBlock<T>& b : model.h_fwd) in.stem.push_back(inception_layer(b));

  // Decoder blocks: the transposed convolution has the spectral norm of its
  // adjoint, whose kernel is the same tensor read in convolution layout from
  // the block's output grid; kernel count follows the block's own output.
  for (i64 j = 0; j < cfg.n_s; ++j) {
    const DeconvBlock<T>& block = model.decoder[static_cast<std::size_t>(j)];
    const auto [out_h, out_w] = extents[static_cast<std::size_t>(cfg.n_s - 1 - j)];
    const Tensor<T>& wgt = block.weight.value;
    LayerBound l;
    l.a = frobenius(wgt);
    l.s = spectral_norm(wgt, ConvGeometry{out_h, out_w, block.stride, 1}).value;
    l.rho = 1.0;
    l.c = static_cast<double>(wgt.dim(1));
    l.r = static_cast<double>(wgt.dim(0) * wgt.dim(2) * wgt.dim(3));
    l.d = static_cast<double>(wgt.dim(1) * out_h * out_w);
    in.stem.push_back(l);
  }

  switch (cfg.b_variant) {
    case BVariant::kNone:
      in.has_vine = false;
      break;
    case BVariant::kConv1x1:
      in.vine = conv_layer(model.b_conv_weight.value, lat_h, lat_w, 1, 0, lat_h,
                           lat_w);
      break;
    case BVariant::kConv3x3:
      in.vine = conv_layer(model.b_conv_weight.value, lat_h, lat_w, 1, 1, lat_h,
                           lat_w);
      break;
    case BVariant::kInception:
      in.vine = inception_layer(model.b_inception);
      break;
  }
  return in;
}

void emit_report_json(const MetricsReport& report, const std::string& path) {
  json j;
  j["config_hash"] = report.config_hash;
  j["per_frame"] = {{"mse", report.frames.mse},
                    {"mae", report.frames.mae},
                    {"ssim", report.frames.ssim}};
  j["aggregate"] = {{"mse", report.frames.mean_mse},
                    {"mae", report.frames.mean_mae},
                    {"ssim", report.frames.mean_ssim},
                    {"ssim_global_fallback", report.frames.ssim_global_fallback}};
  json thresholds = json::object();
  for (const auto& [key, scores] : report.thresholds) {
    thresholds[key] = {{"hss", scores.hss},
                       {"csi", scores.csi},
                       {"hss_degenerate", scores.hss_degenerate},
                       {"csi_degenerate", scores.csi_degenerate}};
  }
  j["thresholds"] = thresholds;
  if (report.bound.has_value()) {
    const BoundDiagnostics& b = *report.bound;
    j["bound"] = {{"R_S", b.r_s},
                  {"R_V", b.r_v},
                  {"R", b.r},
                  {"term", b.rademacher_term},
                  {"gap", b.bound_gap_term},
                  {"stem_product", b.stem_product},
                  {"capacity_sum", b.capacity_sum},
                  {"a_capacity", b.a_capacity},
                  {"L_S", b.l_s}};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report \"" + path + "\"");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for report \"" + path + "\"");
}

MetricsReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report \"" + path + "\"");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("report \"" + path + "\" is not valid JSON: " + e.what());
  }
  MetricsReport report;
  try {
    report.config_hash = j.at("config_hash").get<std::string>();
    const json& pf = j.at("per_frame");
    report.frames.mse = pf.at("mse").get<std::vector<double>>();
    report.frames.mae = pf.at("mae").get<std::vector<double>>();
    report.frames.ssim = pf.at("ssim").get<std::vector<double>>();
    const json& agg = j.at("aggregate");
    report.frames.mean_mse = agg.at("mse").get<double>();
    report.frames.mean_mae = agg.at("mae").get<double>();
    report.frames.mean_ssim = agg.at("ssim").get<double>();
    report.frames.ssim_global_fallback =
        agg.at("ssim_global_fallback").get<bool>();
    for (const auto& [key, v] : j.at("thresholds").items()) {
      ThresholdScores scores;
      scores.hss = v.at("hss").get<double>();
      scores.csi = v.at("csi").get<double>();
      scores.hss_degenerate = v.at("hss_degenerate").get<bool>();
      scores.csi_degenerate = v.at("csi_degenerate").get<bool>();
      report.thresholds[key] = scores;
    }
    if (j.contains("bound")) {
      const json& b = j.at("bound");
      BoundDiagnostics diag;
      diag.r_s = b.at("R_S").get<double>();
      diag.r_v = b.at("R_V").get<double>();
      diag.r = b.at("R").get<double>();
      diag.rademacher_term = b.at("term").get<double>();
      diag.bound_gap_term = b.at("gap").get<double>();
      diag.stem_product = b.at("stem_product").get<double>();
      diag.capacity_sum = b.at("capacity_sum").get<double>();
      diag.a_capacity = b.at("a_capacity").get<double>();
      diag.l_s = b.at("L_S").get<i64>();
      report.bound = diag;
    }
  } catch (const json::exception& e) {
    throw FormatError("report \"" + path + "\" is malformed: " + e.what());
  }
  return report;
}

void emit_report_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report \"" + path + "\"");
  out.precision(17);
  out << "frame,mse,mae,ssim\n";
  for (std::size_t k = 0; k < report.frames.mse.size(); ++k) {
    out << (k + 1) << ',' << report.frames.mse[k] << ',' << report.frames.mae[k]
        << ',' << report.frames.ssim[k] << '\n';
  }
  if (!out) throw IoError("write failed for report \"" + path + "\"");
}

template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& frame) {
  if (frame.rank() != 2) {
    throw ShapeError("write_pgm: expected an (H, W) frame, got " +
                     shape_str(frame.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open image \"" + path + "\"");
  out << "P5\n" << frame.dim(1) << ' ' << frame.dim(0) << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(frame.size()));
  auto fv = frame.data();
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double v = std::clamp(static_cast<double>(fv[i]), 0.0, 1.0);
    row[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  if (!out) throw IoError("write failed for image \"" + path + "\"");
}

template <typename T>
void render_frames(const Tensor<T>& truth, const Tensor<T>& pred,
                   const std::string& dir) {
  require_same_shape(truth.shape(), pred.shape(), "render_frames");
  if (truth.rank() != 5) {
    throw ShapeError("render_frames: expected (N, L, C, H, W), got " +
                     shape_str(truth.shape()));
  }
  std::filesystem::create_directories(dir);
  const i64 n = truth.dim(0), l = truth.dim(1), c = truth.dim(2);
  const i64 h = truth.dim(3), w = truth.dim(4);
  const i64 plane = h * w;
  auto tv = truth.data();
  auto pv = pred.data();
  for (i64 s = 0; s < n; ++s) {
    for (i64 k = 0; k < l; ++k) {
      for (i64 ch = 0; ch < c; ++ch) {
        const i64 base = ((s * l + k) * c + ch) * plane;
        Tensor<T> gt = Tensor<T>::zeros({h, w});
        Tensor<T> pf = Tensor<T>::zeros({h, w});
        Tensor<T> diff = Tensor<T>::zeros({h, w});
        auto gv = gt.mutable_data();
        auto pfv = pf.mutable_data();
        auto dv = diff.mutable_data();
        for (i64 i = 0; i < plane; ++i) {
          gv[static_cast<std::size_t>(i)] = tv[static_cast<std::size_t>(base + i)];
          pfv[static_cast<std::size_t>(i)] = pv[static_cast<std::size_t>(base + i)];
          dv[static_cast<std::size_t>(i)] = static_cast<T>(
              std::abs(static_cast<double>(tv[static_cast<std::size_t>(base + i)]) -
                       static_cast<double>(pv[static_cast<std::size_t>(base + i)])));
        }
        const std::string stem = dir + "/s" + std::to_string(s) + "_f" +
                                 std::to_string(k) + "_c" + std::to_string(ch);
        write_pgm(stem + "_gt.pgm", gt);
        write_pgm(stem + "_pf.pgm", pf);
        write_pgm(stem + "_diff.pgm", diff);
      }
    }
  }
}

#define STOB_INSTANTIATE_EVALUATION(T)                                         \
  template FrameMetrics frame_metrics<T>(const Tensor<T>&, const Tensor<T>&,  \
                                         double);                             \
  template SsimResult ssim<T>(const Tensor<T>&, const Tensor<T>&, double);    \
  template Tensor<T> to_dbz<T>(const Tensor<T>&);                             \
  template ConfusionCounts confusion_counts<T>(const Tensor<T>&,              \
                                               const Tensor<T>&, double);     \
  template Tensor<T> merged_inception_kernel<T>(const InceptionBlock<T>&);    \
  template BoundInputs collect_bound_inputs<T>(const ObserverModel<T>&,       \
                                               double, std::int64_t, double,  \
                                               double, double);               \
  template void write_pgm<T>(const std::string&, const Tensor<T>&);           \
  template void render_frames<T>(const Tensor<T>&, const Tensor<T>&,          \
                                 const std::string&);

STOB_INSTANTIATE_EVALUATION(float)
STOB_INSTANTIATE_EVALUATION(double)

#undef STOB_INSTANTIATE_EVALUATION

}  // namespace stob
