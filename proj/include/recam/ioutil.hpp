#pragma once

#include <string>

namespace recam::ioutil {

// Shortest decimal form that parses back to the same double: reruns of a
// deterministic computation produce byte-identical text files.
std::string fmt_double(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace recam::ioutil
