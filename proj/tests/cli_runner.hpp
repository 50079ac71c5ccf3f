#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace cli {

struct Result {
    int status = -1;
    std::string out, err;
};

inline std::string binary() {
    if (const char* p = std::getenv("VTUNET_CLI")) return p;
#ifdef VTUNET_CLI_PATH
    return VTUNET_CLI_PATH;
#else
    return "vtunet";
#endif
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Runs the CLI through the shell with an optional thread-count override.
inline Result run(const std::string& args, const std::filesystem::path& scratch, int threads = 0) {
    const auto o = scratch / "stdout.txt", e = scratch / "stderr.txt";
    std::string cmd;
    if (threads > 0) cmd += "VTUNET_THREADS=" + std::to_string(threads) + " ";
    cmd += "'" + binary() + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

struct Scratch {
    std::filesystem::path path;
    explicit Scratch(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~Scratch() { std::filesystem::remove_all(path); }
    std::string operator/(const std::string& name) const { return "'" + (path / name).string() + "'"; }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace cli
