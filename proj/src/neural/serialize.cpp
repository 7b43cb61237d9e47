// SPDX-License-Identifier: Apache-2.0
//
// Model file layout:
//   8 bytes   magic "GAITLSTM"
//   u32 LE    format version
//   u64 LE    header length in bytes
//   header    JSON: shapes, meta, tensor table
//   payload   little-endian IEEE-754 doubles: parameters in tensor-table
//             order (column-major), then input mean, input std, output
//             scale, output offset
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/neural.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>

namespace gaitloop::neural {
namespace {

constexpr char kMagic[8] = {'G', 'A', 'I', 'T', 'L', 'S', 'T', 'M'};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::string_view in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_doubles(std::string& out, const double* p, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) put_le(out, std::bit_cast<std::uint64_t>(p[i]));
}

}  // namespace

std::string serialize_model(const Model& model) {
  const auto& sh = model.shape();
  const auto& nm = model.norm;
  if (nm.input_mean.size() != sh.input || nm.input_std.size() != sh.input || nm.output_scale.size() != sh.output ||
      nm.output_offset.size() != sh.output)
    throw DimensionError("normalization vectors do not match the model shape");
  for (Eigen::Index i = 0; i < sh.input; ++i)
    if (!(nm.input_std[i] > 0.0)) throw NumericError("input std must be positive for every channel");
  if (!model.params().allFinite()) throw NumericError("model parameters are not finite");

  nlohmann::ordered_json h;
  h["format_version"] = model.meta.format_version;
  h["shape"] = {{"input", sh.input}, {"hidden", sh.hidden}, {"head_hidden", sh.head_hidden}, {"output", sh.output}};
  h["meta"] = {{"n", model.meta.n},
               {"s", model.meta.s},
               {"rate_hz", model.meta.rate_hz},
               {"imu_count", model.meta.imu_count},
               {"cells_per_foot", model.meta.cells_per_foot},
               {"subject_id", model.meta.subject_id}};
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& [name, slot] : model.layout().named())
    tensors.push_back({{"name", name}, {"rows", slot.rows}, {"cols", slot.cols}, {"order", "col"}});
  for (const char* name : {"norm.input_mean", "norm.input_std"})
    tensors.push_back({{"name", name}, {"rows", sh.input}, {"cols", 1}, {"order", "col"}});
  for (const char* name : {"norm.output_scale", "norm.output_offset"})
    tensors.push_back({{"name", name}, {"rows", sh.output}, {"cols", 1}, {"order", "col"}});
  h["tensors"] = tensors;
  const std::string header = h.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.meta.format_version));
  put_le<std::uint64_t>(out, header.size());
  out += header;
  put_doubles(out, model.params().data(), static_cast<std::size_t>(model.params().size()));
  for (const Vector* v : {&nm.input_mean, &nm.input_std, &nm.output_scale, &nm.output_offset})
    put_doubles(out, v->data(), static_cast<std::size_t>(v->size()));
  return out;
}

Model deserialize_model(std::string_view bytes) {
  constexpr std::size_t prefix = sizeof kMagic + 4 + 8;
  if (bytes.size() < prefix) throw IoError("model file truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw IoError("not a model file: bad magic bytes");
  const auto version = get_le<std::uint32_t>(bytes, sizeof kMagic);
  if (version != static_cast<std::uint32_t>(kFormatVersion))
    throw IoError("unsupported model format version " + std::to_string(version) + " (expected " +
                  std::to_string(kFormatVersion) + ")");
  const auto hlen = get_le<std::uint64_t>(bytes, sizeof kMagic + 4);
  if (hlen > bytes.size() - prefix) throw IoError("model file truncated inside header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(prefix, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model header: ") + e.what());
  }
  ModelShape shape;
  ModelMeta meta;
  try {
    if (h.at("format_version").get<int>() != kFormatVersion) throw IoError("header format_version mismatch");
    const auto& s = h.at("shape");
    shape = {s.at("input").get<int>(), s.at("hidden").get<int>(), s.at("head_hidden").get<int>(),
             s.at("output").get<int>()};
    const auto& m = h.at("meta");
    meta.n = m.at("n").get<int>();
    meta.s = m.at("s").get<int>();
    meta.rate_hz = m.at("rate_hz").get<int>();
    meta.imu_count = m.at("imu_count").get<int>();
    meta.cells_per_foot = m.at("cells_per_foot").get<int>();
    meta.subject_id = m.at("subject_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model header: ") + e.what());
  }
  Model model(shape, meta);
  const std::size_t count = model.layout().total + 2 * static_cast<std::size_t>(shape.input) +
                            2 * static_cast<std::size_t>(shape.output);
  const std::size_t payload_at = prefix + hlen;
  if (bytes.size() - payload_at != count * 8)
    throw IoError("model payload has " + std::to_string(bytes.size() - payload_at) + " bytes, expected " +
                  std::to_string(count * 8));
  std::size_t at = payload_at;
  auto read_into = [&](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i, at += 8) v[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, at));
  };
  read_into(model.params());
  for (Vector* v : {&model.norm.input_mean, &model.norm.input_std, &model.norm.output_scale, &model.norm.output_offset})
    read_into(*v);
  if (!model.params().allFinite()) throw IoError("model file contains non-finite parameters");
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  csv::write_atomic(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) {
  const std::string bytes = csv::read_file(path);
  try {
    return deserialize_model(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace gaitloop::neural
