#pragma once

// Runs every shipped fixture into <root>/<fixture stem>/ and collects the
// produced files.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fdjb/cli.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline std::vector<fs::path> list() {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(FDJB_FIXTURE_DIR)) {
        if (e.path().extension() == ".ini") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());  // report fixtures sort last
    return out;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

struct LibraryRun {
    std::map<std::string, std::string> files;  // path relative to root -> bytes
    std::map<std::string, int> exit_codes;     // fixture stem -> exit code
};

inline LibraryRun run_all(const fs::path& root) {
    fs::remove_all(root);
    LibraryRun lr;
    for (const auto& f : list()) {
        const fdjb::RunConfig rc = fdjb::parse_config(slurp(f));
        const std::string stem = f.stem().string();
        const auto rr = fdjb::run(rc, (root / stem).string(), 7);
        lr.exit_codes[stem] = rr.exit_code;
    }
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) lr.files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return lr;
}

}  // namespace fixtures
