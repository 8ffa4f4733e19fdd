#pragma once
#include "autoresearch/error.hpp"
#include "autoresearch/gateway.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return AUTORESEARCH_DATA_DIR; }

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("ar-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& p) const { return path_ / p; }

private:
    fs::path path_;
};

inline void write(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Expects `stmt` to throw autoresearch::Error with the given code.
#define EXPECT_AR_ERROR(stmt, ecode)                                                                      \
    do {                                                                                                  \
        try {                                                                                             \
            stmt;                                                                                         \
            ADD_FAILURE() << "expected " << autoresearch::code_name(ecode) << ", nothing thrown";        \
        } catch (const autoresearch::Error& e_) {                                                         \
            EXPECT_EQ(autoresearch::code_name(e_.code()), autoresearch::code_name(ecode)) << e_.what();  \
        }                                                                                                 \
    } while (0)

inline std::shared_ptr<autoresearch::llm::ScriptedSession> scripted(std::vector<std::string> replies) {
    std::vector<autoresearch::llm::ScriptedEntry> entries;
    for (auto& r : replies) entries.push_back({std::nullopt, std::move(r)});
    return std::make_shared<autoresearch::llm::ScriptedSession>(std::move(entries));
}

inline std::unique_ptr<autoresearch::llm::Gateway> gateway_for(std::shared_ptr<autoresearch::llm::Provider> p,
                                                               std::size_t budget = 10'000'000) {
    autoresearch::llm::GatewayOptions o;
    o.token_budget = budget;
    auto g = std::make_unique<autoresearch::llm::Gateway>(std::move(p), o);
    g->set_sleeper([](std::chrono::milliseconds) {});
    return g;
}

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

// Runs a shell command line, capturing stdout (stderr too when merged by the caller).
inline CommandResult run_shell(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

} // namespace testsupport
