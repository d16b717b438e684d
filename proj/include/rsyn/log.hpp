#pragma once

#include <iostream>
#include <sstream>
#include <utility>

namespace rsyn::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

inline Level& verbosity() {
  static Level level = Level::quiet;
  return level;
}

template <class... Args>
void info(Args&&... args) {
  if (verbosity() < Level::info) return;
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  std::cerr << "[rsyn] " << os.str() << '\n';
}

template <class... Args>
void debug(Args&&... args) {
  if (verbosity() < Level::debug) return;
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  std::cerr << "[rsyn:debug] " << os.str() << '\n';
}

}  // namespace rsyn::log
