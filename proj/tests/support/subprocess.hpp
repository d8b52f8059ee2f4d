#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

// Thin popen wrapper for exercising the CLI binary end to end.
namespace subprocess {

struct Result {
    int exit_code = -1;
    std::string output;  // stdout and stderr merged
};

inline Result run(const std::string& command) {
    Result result;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed: " + command);
    std::array<char, 4096> buffer;
    size_t n;
    while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
        result.output.append(buffer.data(), n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// Path of the CLI under test, injected by ctest.
inline std::string adrc_bin() {
    const char* bin = std::getenv("ADRC_BIN");
    if (!bin) throw std::runtime_error("ADRC_BIN is not set; run through ctest");
    return bin;
}

}  // namespace subprocess
