#include "adda/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "adda/error.hpp"

namespace adda::model {

using nlohmann::json;

namespace {

json layer_json(const nn::LayerSpec& s) {
  json j{{"kind", nn::to_string(s.kind)}};
  switch (s.kind) {
    case nn::LayerKind::Conv1D:
    case nn::LayerKind::MaxPool1D:
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      break;
    case nn::LayerKind::Dense:
      j["in_dim"] = s.in_dim;
      j["out_dim"] = s.out_dim;
      break;
    case nn::LayerKind::ReLU:
      break;
  }
  return j;
}

json extractor_layout() {
  json groups = json::array();
  for (const auto& g : extractor_specs()) {
    json layers = json::array();
    for (const auto& l : g.layers()) layers.push_back(layer_json(l));
    groups.push_back({{"layers", layers}});
  }
  return groups;
}

std::vector<std::size_t> weight_shape(const nn::LayerSpec& s) {
  if (s.kind == nn::LayerKind::Conv1D) return {s.kernel, s.in_channels, s.out_channels};
  return {s.in_dim, s.out_dim};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFF));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 3; b >= 0; --b) v = (v << 8) | in[at + static_cast<std::size_t>(b)];
  return v;
}

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* data;
};

template <typename Fn>
void for_each_tensor(const std::string& prefix, const nn::LayerSpec& spec, nn::LayerParams& p, Fn&& fn) {
  fn(TensorRef{prefix + ".weights", weight_shape(spec), &p.weights});
  fn(TensorRef{prefix + ".biases", {p.biases.size()}, &p.biases});
}

std::vector<TensorRef> tensors(ModelFile& m) {
  std::vector<TensorRef> out;
  auto add = [&](TensorRef t) { out.push_back(std::move(t)); };
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    for_each_tensor("extractor.group" + std::to_string(g + 1), extractor_specs()[g].main,
                    m.extractor.mutable_group(g), add);
  }
  if (m.discriminator) {
    for (std::size_t i = 0; i < Discriminator::kLayers; ++i) {
      for_each_tensor("discriminator.dense" + std::to_string(i + 1), m.discriminator->spec(i),
                      m.discriminator->mutable_layer(i), add);
    }
  }
  return out;
}

[[noreturn]] void bad(const std::string& what) { throw InvalidInput("model file: " + what); }

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelFile& model) {
  ModelFile copy = model;
  json header;
  header["format_version"] = kModelFormatVersion;
  header["architecture"] = "a2cnn-1d";
  header["input_length"] = kInputLength;
  header["num_classes"] = kNumClasses;
  header["groups"] = extractor_layout();
  header["untie_count"] = model.untie_count ? json(*model.untie_count) : json(nullptr);
  header["metadata"] = model.metadata;
  if (model.discriminator) {
    json layers = json::array();
    for (std::size_t i = 0; i < Discriminator::kLayers; ++i) layers.push_back(layer_json(model.discriminator->spec(i)));
    header["discriminator"] = {{"input_dim", model.discriminator->input_dim()}, {"layers", layers}};
  }
  json list = json::array();
  const auto refs = tensors(copy);
  for (const auto& t : refs) list.push_back({{"name", t.name}, {"shape", t.shape}, {"count", t.data->size()}});
  header["tensors"] = list;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : refs) {
    for (double v : *t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

ModelFile decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kModelMagic, 8) != 0) bad("bad magic");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kModelFormatVersion) bad("unsupported format version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + static_cast<std::size_t>(header_len)) bad("truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const json::exception& e) {
    bad(std::string("header is not valid JSON: ") + e.what());
  }

  ModelFile m;
  try {
    if (header.at("groups") != extractor_layout()) bad("extractor layout differs from this build");
    if (!header.at("untie_count").is_null()) m.untie_count = header.at("untie_count").get<int>();
    m.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    if (header.contains("discriminator")) {
      m.discriminator = Discriminator(header.at("discriminator").at("input_dim").get<std::size_t>());
    }
    const auto refs = tensors(m);
    const auto& listed = header.at("tensors");
    if (listed.size() != refs.size()) bad("tensor list does not match the layout");
    std::size_t at = 16 + header_len;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (listed[i].at("name") != refs[i].name || listed[i].at("count") != refs[i].data->size()) {
        bad("tensor " + refs[i].name + " is missing or mis-sized");
      }
      if (bytes.size() < at + 4 * refs[i].data->size()) bad("truncated payload");
      for (double& v : *refs[i].data) {
        v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
        at += 4;
      }
    }
    if (at != bytes.size()) bad("trailing bytes after payload");
  } catch (const json::exception& e) {
    bad(std::string("malformed header: ") + e.what());
  }
  return m;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

FeatureExtractor quantized(const FeatureExtractor& extractor) {
  FeatureExtractor q = extractor;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    auto& p = q.mutable_group(g);
    for (double& v : p.weights) v = static_cast<double>(static_cast<float>(v));
    for (double& v : p.biases) v = static_cast<double>(static_cast<float>(v));
  }
  return q;
}

}  // namespace adda::model
