#pragma once

#include <filesystem>
#include <string>

namespace posemod {

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace posemod
