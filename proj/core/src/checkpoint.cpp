#include "lgnmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lgnmt {

namespace {

constexpr std::string_view kMagicPrefix = "LGNMT";
constexpr std::string_view kVersion = "001";
constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kPreamble = kMagicSize + 4;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

using Kind = CheckpointError::Kind;

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["dim_model"] = c.dim_model;
  j["dim_ff"] = c.dim_ff;
  j["n_encoder_layers"] = c.n_encoder_layers;
  j["n_decoder_layers"] = c.n_decoder_layers;
  j["n_heads"] = c.n_heads;
  j["dropout_rate"] = c.dropout_rate;
  j["src_vocab_size"] = c.src_vocab_size;
  j["tgt_vocab_size"] = c.tgt_vocab_size;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dim_model = j.at("dim_model").get<std::size_t>();
  c.dim_ff = j.at("dim_ff").get<std::size_t>();
  c.n_encoder_layers = j.at("n_encoder_layers").get<std::size_t>();
  c.n_decoder_layers = j.at("n_decoder_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.src_vocab_size = j.at("src_vocab_size").get<std::size_t>();
  c.tgt_vocab_size = j.at("tgt_vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

}  // namespace

std::string serialize_checkpoint(const Model<float>& model) {
  nlohmann::ordered_json header;
  header["config"] = config_json(model.config());
  auto tensors = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    nlohmann::ordered_json t;
    t["name"] = p.name;
    t["shape"] = p.value.shape();
    t["dtype"] = "f32";
    t["offset"] = offset;
    tensors.push_back(std::move(t));
    offset += p.value.size() * 4;
  }
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::string out;
  out.reserve(kPreamble + header_text.size() + offset);
  out += kMagicPrefix;
  out += kVersion;
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& p : model.parameters()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) put_f32(out, p.value[k]);
  }
  return out;
}

Model<float> deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagicSize) throw CheckpointError(Kind::truncated, "checkpoint shorter than its magic number");
  if (bytes.substr(0, kMagicPrefix.size()) != kMagicPrefix) {
    throw CheckpointError(Kind::bad_magic, "not a checkpoint file (bad magic)");
  }
  if (bytes.substr(kMagicPrefix.size(), kVersion.size()) != kVersion) {
    throw CheckpointError(Kind::unsupported_version, "unsupported checkpoint version '" +
                                                         std::string(bytes.substr(kMagicPrefix.size(), 3)) + "'");
  }
  if (bytes.size() < kPreamble) throw CheckpointError(Kind::truncated, "checkpoint truncated in header length");
  const std::size_t header_len = get_u32(bytes.substr(kMagicSize, 4));
  if (bytes.size() - kPreamble < header_len) throw CheckpointError(Kind::truncated, "checkpoint truncated in header");

  nlohmann::json header;
  ModelConfig config;
  try {
    header = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
    config = config_from_json(header.at("config"));
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::bad_header, std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::bad_header, std::string("invalid model config in checkpoint: ") + e.what());
  }

  // Guard against absurd configs before allocating.
  if (config.max_len > (1u << 16) || config.dim_model > (1u << 16) || config.dim_ff > (1u << 20) ||
      config.src_vocab_size > (1u << 24) || config.tgt_vocab_size > (1u << 24) || config.n_encoder_layers > 1024 ||
      config.n_decoder_layers > 1024) {
    throw CheckpointError(Kind::bad_header, "implausible model config in checkpoint");
  }
  const std::size_t data_size = bytes.size() - kPreamble - header_len;
  if (count_parameters(config) * 4 != data_size) {
    if (count_parameters(config) * 4 > data_size) {
      throw CheckpointError(Kind::truncated, "checkpoint data section holds " + std::to_string(data_size) +
                                                 " bytes, config needs " +
                                                 std::to_string(count_parameters(config) * 4));
    }
    throw CheckpointError(Kind::layout_mismatch, "checkpoint data section larger than the config implies");
  }

  Model<float> model = Model<float>::zeros(config);
  const std::string_view data = bytes.substr(kPreamble + header_len);
  try {
    const auto& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != model.parameters().size()) {
      throw CheckpointError(Kind::layout_mismatch, "tensor directory does not match the model layout");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = tensors[i];
      auto& p = model.parameters()[i];
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto dtype = t.at("dtype").get<std::string>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (name != p.name || shape != p.value.shape()) {
        throw CheckpointError(Kind::layout_mismatch, "tensor " + std::to_string(i) + " is '" + name + "' " +
                                                         shape_str(shape) + ", expected '" + p.name + "' " +
                                                         shape_str(p.value.shape()));
      }
      if (dtype != "f32") throw CheckpointError(Kind::layout_mismatch, "unsupported dtype '" + dtype + "'");
      if (offset > data.size() || data.size() - offset < p.value.size() * 4) {
        throw CheckpointError(Kind::layout_mismatch, "tensor '" + name + "' extends past the data section");
      }
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        p.value[k] = std::bit_cast<float>(get_u32(data.substr(offset + 4 * k, 4)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::bad_header, std::string("corrupt tensor directory: ") + e.what());
  }
  return model;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::io, "failed writing " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace lgnmt
