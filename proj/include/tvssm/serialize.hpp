#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tvssm/basis.hpp"
#include "tvssm/network.hpp"

namespace tvssm {

using json = nlohmann::json;

json to_json(const BasisDictionary& dict);
BasisDictionary dictionary_from_json(const json& j);

json to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const json& j);
json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const json& j);

json to_json(const NetworkParams& params);
NetworkParams network_params_from_json(const json& j);

std::string activation_name(Activation a);
Activation parse_activation(const std::string& s);

inline constexpr int kCheckpointVersion = 1;

// Structured-text checkpoint; doubles are written in shortest round-trip form so load(save(p)) == p bitwise.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace tvssm
