#pragma once

#include <string>

#include "vtg/io/archive.hpp"
#include "vtg/nn/layers.hpp"

namespace vtg::io {

void store_params(Archive& archive, const std::string& prefix, const nn::ParamList<float>& params);
// Copies tensors into existing parameters; names and shapes must match exactly.
void load_params(const Archive& archive, const std::string& prefix, const nn::ParamList<float>& params);

}  // namespace vtg::io
