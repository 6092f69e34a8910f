#pragma once

#include <map>
#include <string>

#include "caai/synthetic.hpp"
#include "caai/trainer.hpp"

namespace caai {

/// Flat key=value text file: '#' comments and blank lines ignored, values
/// are ints, floats, booleans, strings, or comma-separated int lists.
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

/// Training configuration from a file; starts from desk-scale defaults and
/// rejects unknown keys. Every TrainConfig / BackboneConfig field is
/// addressable.
TrainConfig train_config_from_file(const std::string& path);

/// Synthetic-data recipe from a file; rejects unknown keys.
SyntheticSpec synthetic_spec_from_file(const std::string& path);

}  // namespace caai
