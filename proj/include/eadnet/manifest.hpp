#pragma once

#include <string>
#include <vector>

#include "eadnet/common.hpp"

// Dataset manifest: UTF-8 text, one record per line, three tab-separated
// paths (clear, blurry, edge). Relative paths are resolved against the
// manifest's own directory at load time.

namespace eadnet::data {

struct SampleRecord {
    std::string clear_path;
    std::string blurry_path;
    std::string edge_path;
};

using Manifest = std::vector<SampleRecord>;

/// Loads and validates: every path must exist, clear paths must be unique.
/// Malformed lines report their 1-based line number.
Manifest read_manifest(const std::string& path);

/// Writes records as given (no path rewriting).
void write_manifest(const std::string& path, const Manifest& m);

}  // namespace eadnet::data
