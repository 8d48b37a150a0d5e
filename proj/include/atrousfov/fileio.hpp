#pragma once

#include <string>
#include <string_view>

namespace afov {

/// Writes to "<path>.tmp" then renames over `path`.
void atomic_write(const std::string& path, std::string_view bytes);

std::string read_file(const std::string& path);

}  // namespace afov
