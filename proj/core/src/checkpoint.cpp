#include "stob/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "binary_io.hpp"

namespace stob {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'O', 'B'};

std::string shape_of(const Shape& s) { return shape_str(s); }

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ExperimentConfig& config,
                     const ObserverModel<T>& model, const Adam<T>* optimizer,
                     std::int64_t epoch, const std::string& rng_state) {
  if (path.empty()) throw IoError("checkpoint path is empty");
  if (epoch < 0) throw ContractError("checkpoint epoch must be nonnegative");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint \"" + path + "\" for writing");
  detail::LeWriter w(out, path);

  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(config.to_canonical_json());

  const auto params = model.parameters();
  w.u64(params.size());
  for (const Parameter<T>* p : params) {
    w.str(p->name);
    w.u8(detail::dtype_tag<T>());
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::int64_t e : p->value.shape()) w.u64(static_cast<std::uint64_t>(e));
    w.payload(p->value.data());
  }

  w.u8(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    if (optimizer->params().size() != params.size()) {
      throw ContractError("checkpoint: optimizer tracks " +
                          std::to_string(optimizer->params().size()) +
                          " parameters, model has " + std::to_string(params.size()));
    }
    const AdamConfig& oc = optimizer->config();
    w.f64(oc.lr);
    w.f64(oc.beta1);
    w.f64(oc.beta2);
    w.f64(oc.eps);
    w.u64(static_cast<std::uint64_t>(optimizer->step_count()));
    for (const std::vector<T>& m : optimizer->first_moments()) {
      w.payload(std::span<const T>(m));
    }
    for (const std::vector<T>& v : optimizer->second_moments()) {
      w.payload(std::span<const T>(v));
    }
  }

  w.u64(static_cast<std::uint64_t>(epoch));
  w.str(rng_state);
  out.flush();
  if (!out) throw IoError("write failed for checkpoint \"" + path + "\"");
}

ExperimentConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint \"" + path + "\"");
  detail::LeReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  return ExperimentConfig::from_json_text(r.str(1ULL << 24));
}

template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, ObserverModel<T>& model,
                               Adam<T>* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint \"" + path + "\"");
  detail::LeReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }

  CheckpointInfo info;
  info.config = ExperimentConfig::from_json_text(r.str(1ULL << 24));

  auto params = model.parameters();
  const std::uint64_t count = r.u64();
  std::vector<std::string> diffs;
  if (count != params.size()) {
    diffs.push_back("parameter count: checkpoint " + std::to_string(count) +
                    ", model " + std::to_string(params.size()));
  }

  std::vector<std::vector<T>> scratch_payloads;
  scratch_payloads.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint8_t tag = r.u8();
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("implausible parameter rank " + std::to_string(rank));
    Shape extents(rank);
    std::int64_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      extents[d] = static_cast<std::int64_t>(r.u64());
      if (extents[d] < 1 || extents[d] > (1LL << 32)) {
        r.fail("implausible extent in parameter \"" + name + "\"");
      }
      size *= extents[d];
    }

    std::string mismatch;
    if (tag != detail::dtype_tag<T>()) {
      mismatch = "dtype " + std::string(detail::dtype_name(tag)) + " vs model " +
                 detail::dtype_name(detail::dtype_tag<T>());
    } else if (i < params.size()) {
      Parameter<T>* p = params[i];
      if (p->name != name) {
        mismatch = "name \"" + name + "\" vs model \"" + p->name + "\"";
      } else if (p->value.shape() != extents) {
        mismatch = "shape " + shape_of(extents) + " vs model " +
                   shape_of(p->value.shape());
      }
    }

    if (mismatch.empty() && i < params.size()) {
      r.payload(params[i]->value.mutable_data());
      scratch_payloads.emplace_back();
    } else {
      std::vector<T> scratch(static_cast<std::size_t>(size));
      r.payload(std::span<T>(scratch));
      scratch_payloads.push_back(std::move(scratch));
      if (!mismatch.empty() && diffs.size() < 8) {
        diffs.push_back("parameter " + std::to_string(i) + ": " + mismatch);
      }
    }
  }

  if (!diffs.empty()) {
    std::ostringstream msg;
    msg << "checkpoint \"" << path << "\" does not match the model:";
    for (const std::string& d : diffs) msg << "\n  - " << d;
    throw ContractError(msg.str());
  }

  const std::uint8_t has_optimizer = r.u8();
  if (has_optimizer != 0) {
    AdamConfig oc;
    oc.lr = r.f64();
    oc.beta1 = r.f64();
    oc.beta2 = r.f64();
    oc.eps = r.f64();
    const std::uint64_t step_count = r.u64();
    std::vector<std::vector<T>> m(params.size()), v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].resize(static_cast<std::size_t>(params[i]->value.size()));
      r.payload(std::span<T>(m[i]));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      v[i].resize(static_cast<std::size_t>(params[i]->value.size()));
      r.payload(std::span<T>(v[i]));
    }
    if (optimizer != nullptr) {
      const AdamConfig& cur = optimizer->config();
      if (cur.lr != oc.lr || cur.beta1 != oc.beta1 || cur.beta2 != oc.beta2 ||
          cur.eps != oc.eps) {
        throw ContractError("checkpoint optimizer hyperparameters differ from "
                            "the optimizer being restored");
      }
      optimizer->restore(static_cast<std::int64_t>(step_count), std::move(m),
                         std::move(v));
    }
  } else if (optimizer != nullptr) {
    throw ContractError("checkpoint \"" + path + "\" holds no optimizer state");
  }

  info.epoch = static_cast<std::int64_t>(r.u64());
  info.rng_state = r.str(1ULL << 24);
  return info;
}

template void save_checkpoint<float>(const std::string&, const ExperimentConfig&,
                                     const ObserverModel<float>&,
                                     const Adam<float>*, std::int64_t,
                                     const std::string&);
template void save_checkpoint<double>(const std::string&, const ExperimentConfig&,
                                      const ObserverModel<double>&,
                                      const Adam<double>*, std::int64_t,
                                      const std::string&);
template CheckpointInfo load_checkpoint<float>(const std::string&,
                                               ObserverModel<float>&,
                                               Adam<float>*);
template CheckpointInfo load_checkpoint<double>(const std::string&,
                                                ObserverModel<double>&,
                                                Adam<double>*);

}  // namespace stob
