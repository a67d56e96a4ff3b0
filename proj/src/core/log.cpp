#include "vtg/core/log.hpp"

#include <cstdio>
#include <mutex>

namespace vtg {

namespace {
std::mutex g_mutex;
WarningSink g_sink;
}  // namespace

void warn(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink)
    g_sink(message);
  else
    std::fprintf(stderr, "warning: %s\n", message.c_str());
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(sink, g_sink);
  return sink;
}

}  // namespace vtg
