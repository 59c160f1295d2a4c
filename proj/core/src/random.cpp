#include "stob/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stob {

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  // Box-Muller. u1 is nudged away from zero so the log stays finite.
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::int64_t Rng::index(std::int64_t n) {
  if (n <= 0) throw ContractError("Rng::index: n must be positive");
  std::int64_t i = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

std::uint64_t Rng::fork(std::uint64_t stream) {
  return mix_seed(gen_(), stream);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> gen_;
  if (is.fail()) throw FormatError("Rng::set_state: unparsable engine state");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* to_string(InitKind kind) {
  switch (kind) {
    case InitKind::kNormal: return "normal";
    case InitKind::kUniform: return "uniform";
    case InitKind::kKaimingUniform: return "kaiming-uniform";
  }
  throw ConfigError("invalid InitKind");
}

InitKind init_kind_from_string(const std::string& s) {
  if (s == "normal") return InitKind::kNormal;
  if (s == "uniform") return InitKind::kUniform;
  if (s == "kaiming-uniform") return InitKind::kKaimingUniform;
  throw ConfigError("unknown init kind \"" + s + "\"");
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean, double stddev) {
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.normal(mean, stddev));
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_kaiming_uniform(Tensor<T>& t, Rng& rng, std::int64_t fan_in,
                          double slope) {
  if (fan_in <= 0) throw ContractError("fill_kaiming_uniform: fan_in must be positive");
  const double bound =
      std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
  fill_uniform(t, rng, -bound, bound);
}

template <typename T>
void fill_init(Tensor<T>& t, Rng& rng, InitKind kind, std::int64_t fan_in,
               double slope) {
  switch (kind) {
    case InitKind::kNormal: fill_normal(t, rng, 0.0, 1.0); return;
    case InitKind::kUniform: fill_uniform(t, rng, -1.0, 1.0); return;
    case InitKind::kKaimingUniform:
      fill_kaiming_uniform(t, rng, fan_in, slope);
      return;
  }
  throw ConfigError("invalid InitKind");
}

template void fill_normal<float>(Tensor<float>&, Rng&, double, double);
template void fill_normal<double>(Tensor<double>&, Rng&, double, double);
template void fill_uniform<float>(Tensor<float>&, Rng&, double, double);
template void fill_uniform<double>(Tensor<double>&, Rng&, double, double);
template void fill_kaiming_uniform<float>(Tensor<float>&, Rng&, std::int64_t, double);
template void fill_kaiming_uniform<double>(Tensor<double>&, Rng&, std::int64_t, double);
template void fill_init<float>(Tensor<float>&, Rng&, InitKind, std::int64_t, double);
template void fill_init<double>(Tensor<double>&, Rng&, InitKind, std::int64_t, double);

}  // namespace stob
