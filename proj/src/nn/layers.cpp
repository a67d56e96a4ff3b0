#include "vtg/nn/layers.hpp"

namespace vtg::nn {

int norm_groups(int64_t channels, int preferred) {
  for (int g = std::max(1, preferred); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace vtg::nn
