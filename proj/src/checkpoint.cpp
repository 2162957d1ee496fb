#include "asymprune/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace asymprune {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'P', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"d_model", c.d_model},
                        {"n_heads", c.n_heads},
                        {"d_kv", c.d_kv},
                        {"d_ff", c.d_ff},
                        {"n_enc_layers", c.n_enc_layers},
                        {"n_dec_layers", c.n_dec_layers},
                        {"vocab_size", c.vocab_size},
                        {"rel_pos_buckets", c.rel_pos_buckets},
                        {"rel_pos_max_distance", c.rel_pos_max_distance},
                        {"tie_embeddings", c.tie_embeddings},
                        {"gated_ff", c.gated_ff},
                        {"max_input_len", c.max_input_len},
                        {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_kv = j.at("d_kv").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.rel_pos_buckets = j.at("rel_pos_buckets").get<int>();
  c.rel_pos_max_distance = j.at("rel_pos_max_distance").get<int>();
  c.tie_embeddings = j.at("tie_embeddings").get<bool>();
  c.gated_ff = j.at("gated_ff").get<bool>();
  c.max_input_len = j.at("max_input_len").get<int>();
  c.norm_eps = j.at("norm_eps").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const ModelWeights& weights, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);

  const std::string cfg = config_to_json(weights.config).dump();
  write_u32(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  uint32_t count = 0;
  weights.visit_params([&count](const std::string&, const Tensor&) { ++count; });
  write_u32(os, count);

  weights.visit_params([&os](const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.raw()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

ModelWeights load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  const uint32_t cfg_len = read_u32(is);
  std::string cfg_str(cfg_len, '\0');
  is.read(cfg_str.data(), cfg_len);
  const ModelConfig config = config_from_json(nlohmann::json::parse(cfg_str));

  // Allocate the full weight set, then overwrite tensor data in order.
  ModelWeights w = init_model(config, 0);
  const uint32_t count = read_u32(is);
  uint32_t expected = 0;
  w.visit_params([&expected](const std::string&, Tensor&) { ++expected; });
  if (count != expected)
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);

  w.visit_params([&is, &path](const std::string& name, Tensor& t) {
    const uint32_t name_len = read_u32(is);
    std::string stored(name_len, '\0');
    is.read(stored.data(), name_len);
    if (stored != name)
      throw std::runtime_error("checkpoint: tensor order mismatch, expected '" + name +
                               "' got '" + stored + "' in " + path);
    const uint32_t ndim = read_u32(is);
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_u32(is));
    if (shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name + "'");
    is.read(reinterpret_cast<char*>(t.raw()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
  return w;
}

}  // namespace asymprune
