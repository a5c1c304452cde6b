#include "eadnet/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace eadnet::data {

namespace fs = std::filesystem;

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    require<DataError>(in.good(), path + ": cannot open manifest");
    const fs::path base = fs::path(path).parent_path();

    Manifest m;
    std::set<std::string> seen_clear;
    std::string line;
    i64 lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        require<DataError>(fields.size() == 3, path + ":" + std::to_string(lineno) + ": expected 3 " +
                                                   "tab-separated fields, got " +
                                                   std::to_string(fields.size()));
        SampleRecord rec;
        std::string* slots[3] = {&rec.clear_path, &rec.blurry_path, &rec.edge_path};
        for (int i = 0; i < 3; ++i) {
            fs::path p(fields[static_cast<size_t>(i)]);
            if (p.is_relative()) p = base / p;
            require<DataError>(fs::exists(p), path + ":" + std::to_string(lineno) + ": missing file " +
                                                  p.string());
            *slots[i] = p.string();
        }
        require<DataError>(seen_clear.insert(rec.clear_path).second,
                           path + ":" + std::to_string(lineno) + ": duplicate clear image " +
                               rec.clear_path);
        m.push_back(std::move(rec));
    }
    return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    require<DataError>(out.good(), path + ": cannot open manifest for writing");
    for (const auto& r : m) out << r.clear_path << "\t" << r.blurry_path << "\t" << r.edge_path << "\n";
    require<DataError>(out.good(), path + ": manifest write failed");
}

}  // namespace eadnet::data
