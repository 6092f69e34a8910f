#include "caai/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace caai {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; byte swapping is not implemented");

using nlohmann::json;

namespace {

json config_to_json(const TrainConfig& c) {
  return json{
      {"channels", c.model.backbone.channels},
      {"convs_per_block", c.model.backbone.convs_per_block},
      {"input_size", c.model.backbone.input_size},
      {"c_common", c.model.c_common},
      {"c_fuse", c.model.c_fuse},
      {"depth_channels", c.model.depth_channels},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"precision", c.precision},
  };
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.model.backbone.channels = j.at("channels").get<std::vector<int>>();
  c.model.backbone.convs_per_block = j.at("convs_per_block").get<std::vector<int>>();
  c.model.backbone.input_size = j.at("input_size").get<int>();
  c.model.c_common = j.at("c_common").get<int>();
  c.model.c_fuse = j.at("c_fuse").get<int>();
  c.model.depth_channels = j.at("depth_channels").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.precision = j.at("precision").get<int>();
  return c;
}

json read_header(std::ifstream& in, const std::string& path) {
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    fail("'" + path + "' is not a checkpoint (bad magic)");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) fail("truncated checkpoint header in '" + path + "'");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail("truncated checkpoint header in '" + path + "'");
  return json::parse(header);
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint '" + path + "'");
  const json j = read_header(in, path);
  CheckpointInfo info;
  info.precision = j.at("dtype") == "f64" ? 64 : 32;
  info.config = config_from_json(j.at("config"));
  info.seed = j.at("seed").get<std::uint64_t>();
  info.epochs_done = j.at("epochs_done").get<int>();
  return info;
}

template <typename T>
void save_checkpoint(const std::string& path, const TrainerT<T>& trainer) {
  json params = json::array();
  for (const auto& e : trainer.model().params().entries()) {
    params.push_back(json{{"name", e.name},
                          {"shape", e.tensor.shape()},
                          {"scheme", init_scheme_name(e.scheme)}});
  }
  const json header{
      {"dtype", sizeof(T) == 8 ? "f64" : "f32"},
      {"config", config_to_json(trainer.config())},
      {"seed", trainer.config().seed},
      {"epochs_done", trainer.epochs_done()},
      {"params", params},
      {"has_velocities", true},
  };
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, 5);
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_len));
  for (const auto& e : trainer.model().params().entries()) {
    out.write(reinterpret_cast<const char*>(e.tensor.data().data()),
              static_cast<std::streamsize>(e.tensor.numel() * sizeof(T)));
  }
  for (const auto& v : trainer.velocities()) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  if (!out) fail("write failure on checkpoint '" + path + "'");
}

template <typename T>
std::unique_ptr<TrainerT<T>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint '" + path + "'");
  const json j = read_header(in, path);
  const std::string dtype = j.at("dtype").get<std::string>();
  if ((sizeof(T) == 8) != (dtype == "f64")) {
    fail("checkpoint '" + path + "' holds " + dtype + " data; wrong loader instantiation");
  }
  auto trainer = std::make_unique<TrainerT<T>>(config_from_json(j.at("config")));
  auto& entries = trainer->model().params().entries();
  const auto& params = j.at("params");
  if (params.size() != entries.size()) {
    fail("checkpoint parameter table does not match this configuration");
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& pj = params[i];
    if (pj.at("name").get<std::string>() != entries[i].name ||
        pj.at("shape").get<std::vector<int>>() != entries[i].tensor.shape()) {
      fail("checkpoint parameter '" + pj.at("name").get<std::string>() +
           "' does not match registry entry '" + entries[i].name + "'");
    }
    auto buf = entries[i].tensor.mutable_data();
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(T)));
  }
  if (j.at("has_velocities").get<bool>()) {
    for (auto& v : trainer->velocities()) {
      in.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
  }
  if (!in) fail("truncated checkpoint data in '" + path + "'");
  trainer->set_epochs_done(j.at("epochs_done").get<int>());
  return trainer;
}

template void save_checkpoint<float>(const std::string&, const TrainerT<float>&);
template void save_checkpoint<double>(const std::string&, const TrainerT<double>&);
template std::unique_ptr<TrainerT<float>> load_checkpoint<float>(const std::string&);
template std::unique_ptr<TrainerT<double>> load_checkpoint<double>(const std::string&);

}  // namespace caai
