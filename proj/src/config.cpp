#include "caai/config.hpp"

#include <fstream>
#include <sstream>

namespace caai {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail("config '" + path + "' line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("config '" + path + "' line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) fail("config '" + path + "': duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

TrainConfig train_config_from_file(const std::string& path) {
  TrainConfig cfg;
  for (const auto& [key, value] : parse_key_value_file(path)) {
    if (key == "input_size") cfg.model.backbone.input_size = parse_int(key, value);
    else if (key == "channels") cfg.model.backbone.channels = parse_int_list(key, value);
    else if (key == "convs_per_block") cfg.model.backbone.convs_per_block = parse_int_list(key, value);
    else if (key == "c_common") cfg.model.c_common = parse_int(key, value);
    else if (key == "c_fuse") cfg.model.c_fuse = parse_int(key, value);
    else if (key == "depth_channels") cfg.model.depth_channels = parse_int(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "momentum") cfg.momentum = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "precision") cfg.precision = parse_int(key, value);
    else fail("config '" + path + "': unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

SyntheticSpec synthetic_spec_from_file(const std::string& path) {
  SyntheticSpec spec;
  for (const auto& [key, value] : parse_key_value_file(path)) {
    if (key == "canvas") spec.canvas = parse_int(key, value);
    else if (key == "num_shapes") spec.num_shapes = parse_int(key, value);
    else if (key == "rectangles") spec.rectangles = parse_bool(key, value);
    else if (key == "ellipses") spec.ellipses = parse_bool(key, value);
    else if (key == "depth_noise_sigma") spec.depth_noise_sigma = parse_double(key, value);
    else if (key == "texture_amplitude") spec.texture_amplitude = parse_double(key, value);
    else fail("config '" + path + "': unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

}  // namespace caai
