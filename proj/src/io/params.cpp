#include "vtg/io/params.hpp"

namespace vtg::io {

void store_params(Archive& archive, const std::string& prefix, const nn::ParamList<float>& params) {
  for (const auto& p : params) archive.put(prefix + p.name, p.var->value);
}

void load_params(const Archive& archive, const std::string& prefix, const nn::ParamList<float>& params) {
  for (const auto& p : params) p.var->value = archive.get_f32(prefix + p.name, p.var->value.shape());
}

}  // namespace vtg::io
