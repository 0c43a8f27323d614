#include "rwgcn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rwgcn/errors.hpp"
#include "rwgcn/growing.hpp"

namespace rwgcn {
namespace {

constexpr char kMagic[8] = {'R', 'W', 'G', 'C', 'N', 'C', 'K', '1'};
using ojson = nlohmann::ordered_json;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(const std::string& in, std::size_t pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

struct Entry {
  std::string name;
  Tensor* tensor;
  Parameter* param;  // null for buffers
};

std::vector<Entry> entries(Network& net) {
  std::vector<Entry> out;
  for (auto& np : named_parameters(net)) out.push_back({np.name, &np.param->value, np.param});
  for (auto& nb : named_buffers(net)) out.push_back({nb.name, nb.tensor, nullptr});
  return out;
}

ojson config_json(const NetworkConfig& cfg) {
  ojson c;
  c["in_channels"] = cfg.in_channels;
  c["num_classes"] = cfg.num_classes;
  ojson blocks = ojson::array();
  for (const auto& b : cfg.blocks) blocks.push_back({b.out_channels, b.stride});
  c["blocks"] = std::move(blocks);
  ojson layout;
  layout["num_joints"] = cfg.layout.num_joints;
  ojson edges = ojson::array();
  for (const auto& [a, b] : cfg.layout.edges) edges.push_back({a, b});
  layout["edges"] = std::move(edges);
  layout["center"] = cfg.layout.center_joint;
  c["layout"] = std::move(layout);
  c["edge_importance"] = cfg.edge_importance;
  c["edge_importance_trainable"] = cfg.edge_importance_trainable;
  c["seed"] = cfg.seed;
  return c;
}

NetworkConfig config_from_json(const nlohmann::json& c) {
  NetworkConfig cfg;
  cfg.in_channels = c.at("in_channels").get<std::size_t>();
  cfg.num_classes = c.at("num_classes").get<std::size_t>();
  cfg.blocks.clear();
  for (const auto& b : c.at("blocks")) cfg.blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>()});
  const auto& l = c.at("layout");
  cfg.layout.num_joints = l.at("num_joints").get<std::size_t>();
  cfg.layout.center_joint = l.at("center").get<std::size_t>();
  cfg.layout.edges.clear();
  for (const auto& e : l.at("edges")) cfg.layout.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  cfg.edge_importance = c.at("edge_importance").get<bool>();
  cfg.edge_importance_trainable = c.at("edge_importance_trainable").get<bool>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

std::string checkpoint_bytes(Network& net) {
  ojson header;
  header["format"] = "rwgcn-checkpoint";
  header["version"] = 1;
  header["config"] = config_json(net.config);
  header["variant"] = variant_name(net.feedback.variant);
  ojson tensors = ojson::array();
  std::string blob;
  for (const Entry& e : entries(net)) {
    ojson t;
    t["name"] = e.name;
    t["shape"] = e.tensor->shape();
    t["offset"] = blob.size();
    if (e.param != nullptr) t["trainable"] = e.param->trainable;
    tensors.push_back(std::move(t));
    for (double v : e.tensor->data()) put_f64(blob, v);
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out += blob;
  return out;
}

Network network_from_checkpoint_bytes(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (16 + header_len > bytes.size()) throw DataError("checkpoint: truncated header");
  const std::size_t blob_start = 16 + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
    if (header.at("format").get<std::string>() != "rwgcn-checkpoint") {
      throw DataError("checkpoint: unknown format");
    }
    Network net(config_from_json(header.at("config")));
    const Variant variant = parse_variant(header.at("variant").get<std::string>());
    grow_attach(net, variant);

    auto expected = entries(net);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != expected.size()) {
      throw DataError("checkpoint: tensor count " + std::to_string(tensors.size()) +
                      " does not match architecture (" + std::to_string(expected.size()) + ")");
    }
    std::size_t blob_size = 0;
    for (const auto& e : expected) blob_size += 8 * e.tensor->size();
    if (bytes.size() - blob_start != blob_size) {
      throw DataError("checkpoint: tensor data is " + std::to_string(bytes.size() - blob_start) +
                      " bytes, expected " + std::to_string(blob_size));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      Entry& e = expected[i];
      if (t.at("name").get<std::string>() != e.name) {
        throw DataError("checkpoint: expected tensor " + e.name + ", found " +
                        t.at("name").get<std::string>());
      }
      if (t.at("shape").get<Shape>() != e.tensor->shape()) {
        throw DataError("checkpoint: shape mismatch for " + e.name);
      }
      const std::size_t offset = t.at("offset").get<std::size_t>();
      if (blob_start + offset + 8 * e.tensor->size() > bytes.size()) {
        throw DataError("checkpoint: data for " + e.name + " is truncated");
      }
      for (std::size_t k = 0; k < e.tensor->size(); ++k) {
        (*e.tensor)[k] = get_f64(bytes, blob_start + offset + 8 * k);
      }
      if (e.param != nullptr && t.contains("trainable")) {
        e.param->trainable = t.at("trainable").get<bool>();
      }
    }
    for (auto& np : named_parameters(net)) np.param->zero_grad();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
}

void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const std::string bytes = checkpoint_bytes(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return network_from_checkpoint_bytes(buf.str());
}

}  // namespace rwgcn
