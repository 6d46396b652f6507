#pragma once

#include <iostream>
#include <string_view>

namespace speckle::detail {

inline void log_warning(std::string_view message) {
  std::cerr << "[speckle] warning: " << message << '\n';
}

}  // namespace speckle::detail
