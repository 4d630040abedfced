#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace iodiag::test {

namespace fs = std::filesystem;

inline fs::path data_dir() { return IODIAG_TEST_DATA_DIR; }
inline fs::path fixture_trace() { return data_dir() / "amrex_like.darshan.txt"; }
inline fs::path corpus_dir() { return data_dir() / "corpus"; }

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("iodiag-test-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Minimal valid darshan-parser header for synthetic traces.
inline std::string trace_header(int nprocs = 4, double runtime = 100.0) {
    std::ostringstream ss;
    ss << "# darshan log version: 3.41\n# exe: ./synthetic\n# jobid: 1\n# start_time: 1000\n# end_time: "
       << 1000 + static_cast<long>(runtime) << "\n# nprocs: " << nprocs << "\n# run time: " << runtime << "\n\n";
    return ss.str();
}

}  // namespace iodiag::test
