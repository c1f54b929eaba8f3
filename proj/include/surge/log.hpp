#pragma once

#include <string_view>

namespace surge::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

void set_level(Level level);
[[nodiscard]] Level level();

void warn(std::string_view msg);
void info(std::string_view msg);

}  // namespace surge::log
