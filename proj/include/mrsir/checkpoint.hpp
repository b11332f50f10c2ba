#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/io_util.hpp"
#include "mrsir/optim.hpp"
#include "mrsir/unet.hpp"

namespace mrsir {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

// Everything needed to rebuild a model and continue its optimization
// trajectory: config, parameters (including normalization statistics),
// Adam moments, and the position in the schedule.
struct CheckpointRecord {
  UNetConfig config;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> optimizer_state; // "m:<param>" / "v:<param>"
  std::uint64_t adam_steps = 0;
  std::uint32_t epoch = 0;
  std::uint32_t stage_index = 0;
  std::uint64_t rng_seed = 0;
};

namespace detail {

inline void put_tensor(std::vector<std::uint8_t>& out, const NamedTensor& t) {
  put_u16(out, static_cast<std::uint16_t>(t.name.size()));
  out.insert(out.end(), t.name.begin(), t.name.end());
  out.push_back(1); // dtype: float64
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto s : t.shape) put_u32(out, static_cast<std::uint32_t>(s));
  for (double v : t.data) put_f64(out, v);
}

inline NamedTensor get_tensor(const std::vector<std::uint8_t>& b,
                              std::size_t& pos) {
  auto need = [&](std::size_t n) {
    if (pos + n > b.size()) throw TruncatedData("checkpoint: short read");
  };
  need(2);
  const std::uint16_t name_len = get_u16(b.data() + pos);
  pos += 2;
  need(name_len);
  NamedTensor t;
  t.name.assign(b.begin() + static_cast<std::ptrdiff_t>(pos),
                b.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
  pos += name_len;
  need(2);
  const std::uint8_t dtype = b[pos++];
  if (dtype != 0 && dtype != 1)
    throw UnsupportedDatatype("checkpoint: unknown tensor dtype");
  const std::uint8_t rank = b[pos++];
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    need(4);
    const std::uint32_t s = get_u32(b.data() + pos);
    pos += 4;
    t.shape.push_back(s);
    count *= s;
  }
  const std::size_t elem = dtype == 0 ? 4 : 8;
  need(count * elem);
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.data[i] = dtype == 0
                    ? static_cast<double>(get_f32(b.data() + pos + 4 * i))
                    : get_f64(b.data() + pos + 8 * i);
  }
  pos += count * elem;
  return t;
}

} // namespace detail

inline void save_checkpoint(const CheckpointRecord& rec,
                            const std::string& path) {
  std::vector<std::uint8_t> out;
  out.push_back('M');
  out.push_back('R');
  out.push_back('C');
  out.push_back('K');
  detail::put_u32(out, 1); // version

  const auto& c = rec.config;
  out.push_back(static_cast<std::uint8_t>(c.dimensionality));
  detail::put_u32(out, static_cast<std::uint32_t>(c.in_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.out_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.encoder_channels.size()));
  for (auto ch : c.encoder_channels)
    detail::put_u32(out, static_cast<std::uint32_t>(ch));
  detail::put_u32(out, static_cast<std::uint32_t>(c.bottleneck_channels));

  detail::put_u32(out, rec.epoch);
  detail::put_u32(out, rec.stage_index);
  detail::put_u64(out, rec.rng_seed);
  detail::put_u64(out, rec.adam_steps);

  detail::put_u32(out, static_cast<std::uint32_t>(rec.parameters.size()));
  for (const auto& t : rec.parameters) detail::put_tensor(out, t);
  detail::put_u32(out, static_cast<std::uint32_t>(rec.optimizer_state.size()));
  for (const auto& t : rec.optimizer_state) detail::put_tensor(out, t);

  detail::write_file_bytes(path, out);
}

inline CheckpointRecord load_checkpoint(const std::string& path) {
  const auto b = detail::read_file_bytes(path);
  if (b.size() < 8 || b[0] != 'M' || b[1] != 'R' || b[2] != 'C' ||
      b[3] != 'K')
    throw MalformedHeader("checkpoint: bad magic");
  std::size_t pos = 4;
  auto need = [&](std::size_t n) {
    if (pos + n > b.size()) throw TruncatedData("checkpoint: short read");
  };
  need(4);
  const std::uint32_t version = detail::get_u32(b.data() + pos);
  pos += 4;
  if (version != 1) throw MalformedHeader("checkpoint: unsupported version");

  CheckpointRecord rec;
  need(1);
  rec.config.dimensionality = b[pos++];
  need(12);
  rec.config.in_channels = detail::get_u32(b.data() + pos);
  pos += 4;
  rec.config.out_channels = detail::get_u32(b.data() + pos);
  pos += 4;
  const std::uint32_t n_enc = detail::get_u32(b.data() + pos);
  pos += 4;
  rec.config.encoder_channels.clear();
  for (std::uint32_t i = 0; i < n_enc; ++i) {
    need(4);
    rec.config.encoder_channels.push_back(detail::get_u32(b.data() + pos));
    pos += 4;
  }
  need(4 + 4 + 4 + 8 + 8);
  rec.config.bottleneck_channels = detail::get_u32(b.data() + pos);
  pos += 4;
  rec.epoch = detail::get_u32(b.data() + pos);
  pos += 4;
  rec.stage_index = detail::get_u32(b.data() + pos);
  pos += 4;
  rec.rng_seed = detail::get_u64(b.data() + pos);
  pos += 8;
  rec.adam_steps = detail::get_u64(b.data() + pos);
  pos += 8;

  need(4);
  const std::uint32_t n_params = detail::get_u32(b.data() + pos);
  pos += 4;
  for (std::uint32_t i = 0; i < n_params; ++i)
    rec.parameters.push_back(detail::get_tensor(b, pos));
  need(4);
  const std::uint32_t n_opt = detail::get_u32(b.data() + pos);
  pos += 4;
  for (std::uint32_t i = 0; i < n_opt; ++i)
    rec.optimizer_state.push_back(detail::get_tensor(b, pos));
  return rec;
}

// Snapshot of a live model (and optionally its optimizer).
inline CheckpointRecord make_checkpoint(UNet& model, const Adam* optimizer,
                                        std::uint32_t epoch,
                                        std::uint32_t stage_index,
                                        std::uint64_t rng_seed) {
  CheckpointRecord rec;
  rec.config = model.config();
  rec.epoch = epoch;
  rec.stage_index = stage_index;
  rec.rng_seed = rng_seed;
  for (auto& p : model.params())
    rec.parameters.push_back({p.name, p.shape, *p.value});
  if (optimizer) {
    rec.adam_steps = optimizer->steps();
    for (const auto& s : const_cast<Adam*>(optimizer)->slots()) {
      rec.optimizer_state.push_back({"m:" + s.name, {s.m.size()}, s.m});
      rec.optimizer_state.push_back({"v:" + s.name, {s.v.size()}, s.v});
    }
  }
  return rec;
}

inline void apply_to_model(const CheckpointRecord& rec, UNet& model) {
  if (!(rec.config == model.config()))
    throw CheckpointMismatch("checkpoint: model config differs");
  auto refs = model.params();
  if (refs.size() != rec.parameters.size())
    throw CheckpointMismatch("checkpoint: parameter count differs");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = rec.parameters[i];
    if (refs[i].name != t.name || refs[i].value->size() != t.data.size())
      throw CheckpointMismatch("checkpoint: parameter " + refs[i].name);
    *refs[i].value = t.data;
  }
}

inline void apply_to_optimizer(const CheckpointRecord& rec, Adam& optimizer) {
  optimizer.set_steps(rec.adam_steps);
  for (auto& s : optimizer.slots()) {
    bool found_m = false, found_v = false;
    for (const auto& t : rec.optimizer_state) {
      if (t.name == "m:" + s.name && t.data.size() == s.m.size()) {
        s.m = t.data;
        found_m = true;
      } else if (t.name == "v:" + s.name && t.data.size() == s.v.size()) {
        s.v = t.data;
        found_v = true;
      }
    }
    if (!found_m || !found_v)
      throw CheckpointMismatch("checkpoint: missing moments for " + s.name);
  }
}

inline UNet model_from_checkpoint(const CheckpointRecord& rec) {
  UNet model(rec.config);
  apply_to_model(rec, model);
  return model;
}

} // namespace mrsir
