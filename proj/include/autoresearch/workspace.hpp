#pragma once
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::sandbox {

namespace fs = std::filesystem;

struct ExecutionPolicy {
    std::chrono::milliseconds timeout{60000};
    std::size_t max_output_bytes = 64 * 1024;
    std::vector<std::string> env_allowlist = {"PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"};
    bool deny_network_install = true;

    void validate() const;
};

struct EditRecord {
    std::string file;
    std::string previous_content;
    bool existed = true; // false when the edit created the file
    std::chrono::system_clock::time_point timestamp;
    std::optional<std::string> edit_instruction;
};

struct ExecutionResult {
    std::string stdout_text;
    std::string stderr_text;
    int exit_code = 0;
    std::chrono::milliseconds duration{0};
    bool truncated = false;
};

inline constexpr std::size_t kMaxInspectLines = 100;
inline constexpr std::string_view kOutputTruncatedMarker = "\n[output truncated]\n";

// True when the command text invokes a package manager install.
bool looks_like_package_install(std::string_view command);

// A directory the agent may touch. Every path argument is relative to root
// and must resolve inside it after following symlinks.
class Workspace {
public:
    explicit Workspace(fs::path root, ExecutionPolicy policy = {});

    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    // Copies prototype/ into a fresh root (which must not exist or be empty).
    static void seed(const fs::path& prototype, const fs::path& root);

    const fs::path& root() const { return root_; }
    const ExecutionPolicy& policy() const { return policy_; }
    void set_policy(ExecutionPolicy policy);

    fs::path resolve(std::string_view relative) const;

    std::vector<std::string> list_files(std::string_view dir_path) const;
    void copy_file(std::string_view source, std::string_view destination);
    std::string read_lines(std::string_view script, long start, long end) const;
    std::string read_file(std::string_view file) const;
    bool exists(std::string_view file) const;

    EditRecord write_with_history(std::string_view file, std::string_view new_content,
                                  std::optional<std::string> edit_instruction = std::nullopt);
    std::string undo_edit(std::string_view script);
    std::size_t history_depth(std::string_view file) const;
    std::vector<EditRecord> history(std::string_view file) const;

    // Runs a script file: .py under python3, .sh under sh, anything else
    // directly. Nonzero exit is a result, not an error. Throws TimedOut,
    // FileMissing, PolicyViolation.
    ExecutionResult execute_script(std::string_view script, const std::vector<std::string>& args = {},
                                   const std::map<std::string, std::string>& extra_env = {}) const;

    // Runs a shell command line under sh -c with the same policy.
    ExecutionResult run_command(const std::string& command,
                                const std::map<std::string, std::string>& extra_env = {}) const;

private:
    std::string key_of(const fs::path& resolved) const;
    ExecutionResult spawn(const std::vector<std::string>& argv,
                          const std::map<std::string, std::string>& extra_env) const;

    fs::path root_;
    ExecutionPolicy policy_;
    mutable std::mutex history_mutex_;
    std::map<std::string, std::vector<EditRecord>> history_;
    mutable std::mutex exec_mutex_;
};

} // namespace autoresearch::sandbox
