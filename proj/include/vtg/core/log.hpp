#pragma once

#include <functional>
#include <string>

namespace vtg {

// Non-fatal diagnostics go to stderr unless a sink is installed.
using WarningSink = std::function<void(const std::string&)>;

void warn(const std::string& message);
WarningSink set_warning_sink(WarningSink sink);

}  // namespace vtg
