#include "stob/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "stob/ops.hpp"

namespace stob {

namespace {

using i64 = std::int64_t;

constexpr char kMagic[4] = {'S', 'T', 'D', 'S'};
constexpr i64 kGlyphEdge = 12;

/// Seven-segment layout on a 12x12 grid; bit i of the mask lights segment i
/// in the order A (top), B (top right), C (bottom right), D (bottom),
/// E (bottom left), F (top left), G (middle).
constexpr unsigned kSegmentMask[10] = {
    0b0111111,  // 0: A B C D E F
    0b0000110,  // 1: B C
    0b1011011,  // 2: A B D E G
    0b1001111,  // 3: A B C D G
    0b1100110,  // 4: B C F G
    0b1101101,  // 5: A C D F G
    0b1111101,  // 6: A C D E F G
    0b0000111,  // 7: A B C
    0b1111111,  // 8: all
    0b1101111,  // 9: A B C D F G
};

std::vector<double> build_glyph(i64 digit) {
  std::vector<double> g(static_cast<std::size_t>(kGlyphEdge * kGlyphEdge), 0.0);
  auto fill = [&](i64 r0, i64 r1, i64 c0, i64 c1) {
    for (i64 r = r0; r <= r1; ++r) {
      for (i64 c = c0; c <= c1; ++c) {
        g[static_cast<std::size_t>(r * kGlyphEdge + c)] = 1.0;
      }
    }
  };
  const unsigned mask = kSegmentMask[digit];
  if (mask & 0b0000001) fill(0, 1, 1, 10);    // A
  if (mask & 0b0000010) fill(1, 5, 10, 11);   // B
  if (mask & 0b0000100) fill(6, 10, 10, 11);  // C
  if (mask & 0b0001000) fill(10, 11, 1, 10);  // D
  if (mask & 0b0010000) fill(6, 10, 0, 1);    // E
  if (mask & 0b0100000) fill(1, 5, 0, 1);     // F
  if (mask & 0b1000000) fill(5, 6, 1, 10);    // G
  return g;
}

void validate_geometry(i64 n, i64 t, i64 h, i64 w) {
  if (n < 1 || t < 1 || h < 1 || w < 1) {
    throw ConfigError("generator: sample count, length and extents must be positive");
  }
}

template <typename T>
void advance(std::vector<ObjectState>& objects, i64 h, i64 w, i64 sprite) {
  const double limit_y = static_cast<double>(h - sprite);
  const double limit_x = static_cast<double>(w - sprite);
  for (ObjectState& o : objects) {
    std::tie(o.py, o.vy) = reflect_step(o.py, o.vy, limit_y);
    std::tie(o.px, o.vx) = reflect_step(o.px, o.vx, limit_x);
  }
}

template <typename T>
std::vector<std::vector<ObjectState>> sample_states(const MotionSpec& spec, i64 n,
                                                    i64 h, i64 w,
                                                    std::uint64_t stream) {
  Rng rng(mix_seed(spec.seed, stream));
  std::vector<std::vector<ObjectState>> states(static_cast<std::size_t>(n));
  const double limit_y = static_cast<double>(h - spec.sprite);
  const double limit_x = static_cast<double>(w - spec.sprite);
  for (auto& sample : states) {
    sample.resize(static_cast<std::size_t>(spec.objects));
    for (ObjectState& o : sample) {
      o.glyph = rng.index(10);
      o.py = rng.uniform() * limit_y;
      o.px = rng.uniform() * limit_x;
      const double angle = rng.uniform() * 2.0 * 3.14159265358979323846;
      const double speed =
          spec.min_speed + (spec.max_speed - spec.min_speed) * rng.uniform();
      o.vy = speed * std::sin(angle);
      o.vx = speed * std::cos(angle);
    }
  }
  return states;
}

}  // namespace

void MotionSpec::validate(i64 height, i64 width) const {
  if (objects < 1) throw ConfigError("MotionSpec: need at least one object");
  if (sprite < 1) throw ConfigError("MotionSpec: sprite size must be positive");
  if (sprite > height || sprite > width) {
    throw ConfigError("MotionSpec: sprite " + std::to_string(sprite) +
                      " larger than frame " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (min_speed < 0 || max_speed < min_speed) {
    throw ConfigError("MotionSpec: need 0 <= min_speed <= max_speed");
  }
}

std::pair<double, double> reflect_step(double p, double v, double limit) {
  if (limit <= 0.0) return {0.0, -v};
  p += v;
  while (p < 0.0 || p > limit) {
    if (p < 0.0) {
      p = -p;
      v = -v;
    } else {
      p = 2.0 * limit - p;
      v = -v;
    }
  }
  return {p, v};
}

const std::vector<double>& digit_glyph(std::int64_t digit) {
  if (digit < 0 || digit > 9) throw ConfigError("digit_glyph: digit out of range");
  static const std::vector<std::vector<double>> glyphs = [] {
    std::vector<std::vector<double>> all;
    all.reserve(10);
    for (i64 d = 0; d < 10; ++d) all.push_back(build_glyph(d));
    return all;
  }();
  return glyphs[static_cast<std::size_t>(digit)];
}

template <typename T>
SequenceData<T> render_digit_sequences(
    const std::vector<std::vector<ObjectState>>& states, i64 t, i64 h, i64 w,
    i64 sprite) {
  const i64 n = static_cast<i64>(states.size());
  validate_geometry(n, t, h, w);
  if (sprite < 1 || sprite > h || sprite > w) {
    throw ConfigError("render: sprite larger than frame");
  }
  SequenceData<T> data;
  data.frames = Tensor<T>::zeros({n, t, 1, h, w});
  data.normalized = true;
  auto out = data.frames.mutable_data();
  const i64 frame_size = h * w;

  for (i64 s = 0; s < n; ++s) {
    std::vector<ObjectState> objects = states[static_cast<std::size_t>(s)];
    for (i64 k = 0; k < t; ++k) {
      T* frame = out.data() + (s * t + k) * frame_size;
      for (const ObjectState& o : objects) {
        const i64 iy = std::clamp<i64>(std::llround(o.py), 0, h - sprite);
        const i64 ix = std::clamp<i64>(std::llround(o.px), 0, w - sprite);
        const std::vector<double>& glyph = digit_glyph(o.glyph);
        for (i64 r = 0; r < sprite; ++r) {
          for (i64 c = 0; c < sprite; ++c) {
            const i64 gr = r * kGlyphEdge / sprite;
            const i64 gc = c * kGlyphEdge / sprite;
            const T v = static_cast<T>(
                glyph[static_cast<std::size_t>(gr * kGlyphEdge + gc)]);
            T& px = frame[(iy + r) * w + (ix + c)];
            px = std::max(px, v);
          }
        }
      }
      advance<T>(objects, h, w, sprite);
    }
  }
  return data;
}

template <typename T>
SequenceData<T> render_blob_sequences(
    const std::vector<std::vector<ObjectState>>& states, i64 t, i64 h, i64 w,
    i64 sprite) {
  const i64 n = static_cast<i64>(states.size());
  validate_geometry(n, t, h, w);
  if (sprite < 1 || sprite > h || sprite > w) {
    throw ConfigError("render: sprite larger than frame");
  }
  SequenceData<T> data;
  data.frames = Tensor<T>::zeros({n, t, 1, h, w});
  data.normalized = true;
  auto out = data.frames.mutable_data();
  const i64 frame_size = h * w;
  const double sigma = static_cast<double>(sprite) / 4.0;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const double center_off = static_cast<double>(sprite - 1) / 2.0;

  for (i64 s = 0; s < n; ++s) {
    std::vector<ObjectState> objects = states[static_cast<std::size_t>(s)];
    for (i64 k = 0; k < t; ++k) {
      T* frame = out.data() + (s * t + k) * frame_size;
      for (const ObjectState& o : objects) {
        const double cy = o.py + center_off;
        const double cx = o.px + center_off;
        for (i64 y = 0; y < h; ++y) {
          const double dy = static_cast<double>(y) - cy;
          for (i64 x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double v = std::exp(-(dy * dy + dx * dx) * inv_two_sigma2);
            T& px = frame[y * w + x];
            px = std::max(px, static_cast<T>(v));
          }
        }
      }
      advance<T>(objects, h, w, sprite);
    }
  }
  return data;
}

template <typename T>
SequenceData<T> gen_moving_digits(const MotionSpec& spec, i64 n, i64 t, i64 h,
                                  i64 w) {
  validate_geometry(n, t, h, w);
  spec.validate(h, w);
  auto states = sample_states<T>(spec, n, h, w, 0x64696769ULL);
  return render_digit_sequences<T>(states, t, h, w, spec.sprite);
}

template <typename T>
SequenceData<T> gen_bouncing_blobs(const MotionSpec& spec, i64 n, i64 t, i64 h,
                                   i64 w) {
  validate_geometry(n, t, h, w);
  spec.validate(h, w);
  auto states = sample_states<T>(spec, n, h, w, 0x626c6f62ULL);
  return render_blob_sequences<T>(states, t, h, w, spec.sprite);
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& raw, T lo, T hi) {
  if (!(hi > lo)) throw ConfigError("normalize: need hi > lo");
  Tensor<T> out = raw.clone();
  const T scale = T(1) / (hi - lo);
  for (T& v : out.mutable_data()) v = (v - lo) * scale;
  return out;
}

template <typename T>
Tensor<T> denormalize(const Tensor<T>& normalized, T lo, T hi) {
  if (!(hi > lo)) throw ConfigError("denormalize: need hi > lo");
  Tensor<T> out = normalized.clone();
  const T span = hi - lo;
  for (T& v : out.mutable_data()) v = v * span + lo;
  return out;
}

template <typename T>
SplitData<T> split(const SequenceData<T>& data, const SplitSpec& spec,
                   std::uint64_t seed) {
  const i64 n = data.samples();
  i64 train_n, val_n, test_n;
  if (spec.absolute) {
    train_n = spec.train_n;
    val_n = spec.val_n;
    test_n = spec.test_n;
    if (train_n < 0 || val_n < 0 || test_n < 0 || train_n + val_n + test_n != n) {
      throw ConfigError("split: absolute counts must be nonnegative and sum to " +
                        std::to_string(n));
    }
  } else {
    const double sum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0 ||
        std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("split: fractions must be nonnegative and sum to 1");
    }
    train_n = std::llround(spec.train_frac * static_cast<double>(n));
    val_n = std::llround(spec.val_frac * static_cast<double>(n));
    train_n = std::min(train_n, n);
    val_n = std::min(val_n, n - train_n);
    test_n = n - train_n - val_n;
  }

  std::vector<i64> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  for (i64 i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.index(i + 1))]);
  }

  auto take = [&](i64 begin, i64 count) {
    Shape shape = data.frames.shape();
    shape[0] = count;
    SequenceData<T> part;
    part.frames = Tensor<T>::zeros(shape);
    part.normalized = data.normalized;
    const i64 row = data.frames.size() / std::max<i64>(1, n);
    auto src = data.frames.data();
    auto dst = part.frames.mutable_data();
    for (i64 i = 0; i < count; ++i) {
      const T* from = src.data() + order[static_cast<std::size_t>(begin + i)] * row;
      std::copy(from, from + row, dst.data() + i * row);
    }
    return part;
  };

  SplitData<T> parts;
  parts.train = take(0, train_n);
  parts.val = take(train_n, val_n);
  parts.test = take(train_n + val_n, test_n);
  return parts;
}

template <typename T>
void write_dataset(const std::string& path, const SequenceData<T>& data) {
  if (path.empty()) throw IoError("dataset path is empty");
  if (data.frames.rank() != 5) {
    throw ShapeError("write_dataset: frames must be (N, T, C, H, W), got " +
                     shape_str(data.frames.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset \"" + path + "\" for writing");
  detail::LeWriter w(out, path);
  w.bytes(kMagic, 4);
  w.u32(kDatasetVersion);
  for (int d = 0; d < 5; ++d) w.u64(static_cast<std::uint64_t>(data.frames.dim(d)));
  w.u8(detail::dtype_tag<T>());
  w.u8(data.normalized ? 1 : 0);
  w.payload(data.frames.data());
  out.flush();
  if (!out) throw IoError("write failed for dataset \"" + path + "\"");
}

namespace {

DatasetHeader read_header_fields(detail::LeReader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad dataset magic");
  DatasetHeader header;
  header.version = r.u32();
  if (header.version != kDatasetVersion) {
    r.fail("unsupported dataset version " + std::to_string(header.version));
  }
  i64* extents[5] = {&header.n, &header.t, &header.c, &header.h, &header.w};
  for (i64* e : extents) {
    *e = static_cast<i64>(r.u64());
    if (*e < 1 || *e > (1LL << 40)) r.fail("implausible extent " + std::to_string(*e));
  }
  header.dtype = r.u8();
  if (header.dtype > 1) r.fail("unknown dtype tag " + std::to_string(header.dtype));
  header.normalized = r.u8() != 0;
  return header;
}

}  // namespace

DatasetHeader read_dataset_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset \"" + path + "\"");
  detail::LeReader r(in, path);
  return read_header_fields(r);
}

template <typename T>
SequenceData<T> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset \"" + path + "\"");
  detail::LeReader r(in, path);
  DatasetHeader header = read_header_fields(r);
  if (header.dtype != detail::dtype_tag<T>()) {
    r.fail(std::string("dataset holds ") + detail::dtype_name(header.dtype) +
           " values, requested " + detail::dtype_name(detail::dtype_tag<T>()));
  }
  SequenceData<T> data;
  data.frames =
      Tensor<T>::zeros({header.n, header.t, header.c, header.h, header.w});
  data.normalized = header.normalized;
  r.payload(data.frames.mutable_data());
  // Surface trailing garbage as corruption rather than silently ignoring it.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) r.fail("trailing bytes after payload");
  return data;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_time(const Tensor<T>& frames, i64 t_in,
                                           i64 t_out) {
  if (frames.rank() != 5) {
    throw ShapeError("split_time: frames must be (N, T, C, H, W), got " +
                     shape_str(frames.shape()));
  }
  if (t_in < 1 || t_out < 1 || t_in + t_out > frames.dim(1)) {
    throw ConfigError("split_time: need t_in + t_out <= " +
                      std::to_string(frames.dim(1)) + ", got " +
                      std::to_string(t_in) + " + " + std::to_string(t_out));
  }
  Tensor<T> past = slice_frames<T>(nullptr, frames, 0, t_in);
  Tensor<T> future = slice_frames<T>(nullptr, frames, t_in, t_out);
  return {std::move(past), std::move(future)};
}

#define STOB_INSTANTIATE_DATASETS(T)                                          \
  template struct SequenceData<T>;                                            \
  template struct SplitData<T>;                                               \
  template SequenceData<T> render_digit_sequences<T>(                         \
      const std::vector<std::vector<ObjectState>>&, i64, i64, i64, i64);      \
  template SequenceData<T> render_blob_sequences<T>(                          \
      const std::vector<std::vector<ObjectState>>&, i64, i64, i64, i64);      \
  template SequenceData<T> gen_moving_digits<T>(const MotionSpec&, i64, i64,  \
                                                i64, i64);                    \
  template SequenceData<T> gen_bouncing_blobs<T>(const MotionSpec&, i64, i64, \
                                                 i64, i64);                   \
  template Tensor<T> normalize<T>(const Tensor<T>&, T, T);                    \
  template Tensor<T> denormalize<T>(const Tensor<T>&, T, T);                  \
  template SplitData<T> split<T>(const SequenceData<T>&, const SplitSpec&,    \
                                 std::uint64_t);                              \
  template void write_dataset<T>(const std::string&, const SequenceData<T>&); \
  template SequenceData<T> read_dataset<T>(const std::string&);               \
  template std::pair<Tensor<T>, Tensor<T>> split_time<T>(const Tensor<T>&,    \
                                                         i64, i64);

STOB_INSTANTIATE_DATASETS(float)
STOB_INSTANTIATE_DATASETS(double)

#undef STOB_INSTANTIATE_DATASETS

}  // namespace stob
