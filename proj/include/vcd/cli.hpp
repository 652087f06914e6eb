#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace vcd {

/// Runs one `vcd` invocation. `args` excludes the program name. Returns the
/// process exit code: 0 on success, 1 on a pipeline error (reported as one
/// JSON line on `err`), 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Where the FT01 file of record `id` lives under `dir`.
std::filesystem::path feature_path(const std::filesystem::path& dir, std::string_view id);

/// "fnv1a64:<16 hex digits>" over the file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace vcd
