#ifndef SPINN_SRC_IO_UTIL_HPP_
#define SPINN_SRC_IO_UTIL_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spinn::detail {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Splits on `delim` and trims ASCII whitespace from every field.
std::vector<std::string> split_fields(std::string_view line, char delim);
std::string_view trim(std::string_view text);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

}  // namespace spinn::detail

#endif  // SPINN_SRC_IO_UTIL_HPP_
