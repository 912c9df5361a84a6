#pragma once

#include <filesystem>

#include "tvssm/datagen.hpp"

namespace tvssm {

// Binary container at `path` plus a JSON sidecar at path + ".json" (seed, provenance, split labels).
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace tvssm
