#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ulab/model.hpp"

namespace ulab {

/// Plain-text checkpoint:
///
///     ulab-model 1
///     kind mlp1
///     input_dim 32
///     hidden_dim 64
///     num_classes 10
///     activation tanh
///     init_seed 7
///     theta 2762
///     <one value per line, 17 significant digits>
///
/// Reading back reproduces theta bit for bit.
void write_checkpoint(const Model& model, std::ostream& out);
Model read_checkpoint(std::istream& in, const std::string& source = "<stream>");

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ulab
