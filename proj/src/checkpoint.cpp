#include "jitterlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace jitterlab {

namespace {

constexpr uint32_t kVersion = 1;
const char kMagic[4] = {'J', 'L', 'C', 'K'};

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_real(std::string& out, real v) {
  if constexpr (sizeof(real) == 8) {
    put_u64(out, std::bit_cast<uint64_t>(static_cast<double>(v)));
  } else {
    put_u32(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
  }
}

struct Reader {
  const std::string& buf;
  size_t off = 0;

  void need(size_t n) const {
    if (off + n > buf.size()) throw CheckpointError("truncated file");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[off++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[off++])) << (8 * i);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(off, n);
    off += n;
    return s;
  }
  real next_real() {
    if constexpr (sizeof(real) == 8) {
      return static_cast<real>(std::bit_cast<double>(u64()));
    } else {
      return static_cast<real>(std::bit_cast<float>(u32()));
    }
  }
};

}  // namespace

void write_tensor_file(const TensorFile& f, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u8(out, static_cast<uint8_t>(float_width_bits()));
  for (int i = 0; i < 3; ++i) put_u8(out, 0);
  put_u64(out, f.meta.size());
  out += f.meta;
  put_u32(out, static_cast<uint32_t>(f.tensors.size()));
  for (const auto& [name, t] : f.tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u8(out, static_cast<uint8_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
  }
  for (const auto& [name, t] : f.tensors)
    for (real v : t.values) put_real(out, v);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw CheckpointError("write failed for " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r{buf};

  if (r.bytes(4) != std::string(kMagic, 4)) throw CheckpointError("bad magic in " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported version " + std::to_string(version));
  uint8_t width = r.u8();
  if (width != float_width_bits())
    throw CheckpointError("float width " + std::to_string(width) + " does not match this build (" +
                          std::to_string(float_width_bits()) + ")");
  for (int i = 0; i < 3; ++i) r.u8();

  TensorFile f;
  uint64_t meta_len = r.u64();
  f.meta = r.bytes(meta_len);

  uint32_t count = r.u32();
  std::vector<std::vector<int>> shapes;
  std::vector<std::string> names;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = r.u32();
    names.push_back(r.bytes(name_len));
    uint8_t rank = r.u8();
    if (rank > 2) throw CheckpointError("tensor rank " + std::to_string(rank) + " unsupported");
    std::vector<int> shape;
    for (int d = 0; d < rank; ++d) {
      uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 28)) throw CheckpointError("implausible dimension");
      shape.push_back(static_cast<int>(dim));
    }
    shapes.push_back(std::move(shape));
  }
  for (uint32_t i = 0; i < count; ++i) {
    Tensor t(shapes[i]);
    for (auto& v : t.values) v = r.next_real();
    f.tensors.emplace_back(names[i], std::move(t));
  }
  if (r.off != buf.size()) throw CheckpointError("trailing bytes in " + path);
  return f;
}

namespace {

nlohmann::json vocab_to_json(const Vocab& v) {
  return nlohmann::json{
      {"symbols", v.symbols}, {"copy_base", v.copy_base}, {"copy_count", v.copy_count}};
}

Vocab vocab_from_json(const nlohmann::json& j) {
  Vocab v;
  for (const auto& s : j.at("symbols")) v.add(s.get<std::string>());
  v.copy_base = j.at("copy_base").get<int>();
  v.copy_count = j.at("copy_count").get<int>();
  return v;
}

}  // namespace

void save_model_checkpoint(const ModelCheckpoint& ck, const std::string& path) {
  nlohmann::json cfg{
      {"encoder_layers", ck.params.config.encoder_layers},
      {"encoder_heads", ck.params.config.encoder_heads},
      {"encoder_dim", ck.params.config.encoder_dim},
      {"decoder_layers", ck.params.config.decoder_layers},
      {"decoder_heads", ck.params.config.decoder_heads},
      {"decoder_dim", ck.params.config.decoder_dim},
      {"output_embed_dim", ck.params.config.output_embed_dim},
      {"dropout", ck.params.config.dropout},
      {"max_output_len", ck.params.config.max_output_len},
      {"max_src_positions", ck.params.config.max_src_positions},
      {"size_class", ck.params.config.size_class},
  };
  nlohmann::json meta{
      {"kind", "jitterlab-model"},
      {"config", cfg},
      {"src_vocab_size", ck.params.src_vocab_size},
      {"tgt_vocab_size", ck.params.tgt_vocab_size},
      {"copy_base", ck.params.copy_base},
      {"copy_count", ck.params.copy_count},
      {"source_vocab", vocab_to_json(ck.source_vocab)},
      {"target_vocab", vocab_to_json(ck.target_vocab)},
  };
  TensorFile f;
  f.meta = meta.dump();
  for (const auto& [name, t] : ck.params.tensors) f.tensors.emplace_back(name, t);
  write_tensor_file(f, path);
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
  TensorFile f = read_tensor_file(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(f.meta);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("metadata is not valid JSON: ") + e.what());
  }

  ModelCheckpoint ck;
  try {
    if (meta.at("kind").get<std::string>() != "jitterlab-model")
      throw CheckpointError("not a model checkpoint");
    const auto& cfg = meta.at("config");
    ModelConfig& c = ck.params.config;
    c.encoder_layers = cfg.at("encoder_layers").get<int>();
    c.encoder_heads = cfg.at("encoder_heads").get<int>();
    c.encoder_dim = cfg.at("encoder_dim").get<int>();
    c.decoder_layers = cfg.at("decoder_layers").get<int>();
    c.decoder_heads = cfg.at("decoder_heads").get<int>();
    c.decoder_dim = cfg.at("decoder_dim").get<int>();
    c.output_embed_dim = cfg.at("output_embed_dim").get<int>();
    c.dropout = cfg.at("dropout").get<double>();
    c.max_output_len = cfg.at("max_output_len").get<int>();
    c.max_src_positions = cfg.at("max_src_positions").get<int>();
    c.size_class = cfg.at("size_class").get<std::string>();
    ck.params.src_vocab_size = meta.at("src_vocab_size").get<int>();
    ck.params.tgt_vocab_size = meta.at("tgt_vocab_size").get<int>();
    ck.params.copy_base = meta.at("copy_base").get<int>();
    ck.params.copy_count = meta.at("copy_count").get<int>();
    ck.source_vocab = vocab_from_json(meta.at("source_vocab"));
    ck.target_vocab = vocab_from_json(meta.at("target_vocab"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("metadata missing fields: ") + e.what());
  }

  try {
    ck.params.config.validate();
  } catch (const ConfigInvalid& e) {
    throw CheckpointError(std::string("stored config rejected: ") + e.what());
  }
  for (auto& [name, t] : f.tensors) ck.params.tensors.emplace(name, std::move(t));
  if (ck.params.tensors.size() != f.tensors.size())
    throw CheckpointError("duplicate tensor names");

  auto expect_rows = [&](const char* name, int rows) {
    auto it = ck.params.tensors.find(name);
    if (it == ck.params.tensors.end()) throw CheckpointError(std::string("missing tensor ") + name);
    if (it->second.rows() != rows)
      throw CheckpointError(std::string(name) + " rows disagree with metadata");
  };
  expect_rows("enc.embed", ck.params.src_vocab_size);
  expect_rows("dec.embed", ck.params.tgt_vocab_size);
  if (ck.source_vocab.size() != ck.params.src_vocab_size ||
      ck.target_vocab.size() != ck.params.tgt_vocab_size)
    throw CheckpointError("vocabulary sizes disagree with metadata");
  if (ck.target_vocab.copy_base != ck.params.copy_base ||
      ck.target_vocab.copy_count != ck.params.copy_count)
    throw CheckpointError("copy layout disagrees with metadata");
  return ck;
}

}  // namespace jitterlab
