#include "autoresearch/workspace.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <regex>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace autoresearch::sandbox {

void ExecutionPolicy::validate() const {
    if (timeout.count() <= 0) fail(ErrorCode::InvalidArgument, "policy timeout must be positive");
    if (max_output_bytes == 0) fail(ErrorCode::InvalidArgument, "policy max_output_bytes must be positive");
}

bool looks_like_package_install(std::string_view command) {
    static const std::regex pattern(R"(\b(pip3?|conda|apt-get|apt|npm|yarn|brew|cargo|mamba|gem)\s+(-\S+\s+)*install\b)",
                                    std::regex::icase);
    static const std::regex python_m(R"(-m\s+pip\s+install\b)", std::regex::icase);
    const std::string s(command);
    return std::regex_search(s, pattern) || std::regex_search(s, python_m);
}

Workspace::Workspace(fs::path root, ExecutionPolicy policy) : policy_(std::move(policy)) {
    policy_.validate();
    std::error_code ec;
    fs::create_directories(root, ec);
    if (!fs::is_directory(root)) fail(ErrorCode::InvalidPath, "workspace root is not a directory: " + root.string());
    root_ = fs::canonical(root);
}

void Workspace::seed(const fs::path& prototype, const fs::path& root) {
    if (!fs::is_directory(prototype)) fail(ErrorCode::FileMissing, "prototype directory not found: " + prototype.string());
    if (fs::exists(root) && !fs::is_empty(root))
        fail(ErrorCode::InvalidPath, "workspace root already populated: " + root.string());
    std::error_code ec;
    fs::create_directories(root, ec);
    fs::copy(prototype, root, fs::copy_options::recursive | fs::copy_options::copy_symlinks, ec);
    if (ec) fail(ErrorCode::WriteError, "seeding workspace failed: " + ec.message());
}

void Workspace::set_policy(ExecutionPolicy policy) {
    policy.validate();
    policy_ = std::move(policy);
}

fs::path Workspace::resolve(std::string_view relative) const {
    if (relative.find('\0') != std::string_view::npos) fail(ErrorCode::InvalidPath, "path contains a NUL byte");
    const fs::path rel{std::string(relative)};
    if (rel.is_absolute() || rel.has_root_name() || rel.has_root_directory())
        fail(ErrorCode::InvalidPath, "absolute paths are not allowed: " + std::string(relative));
    std::error_code ec;
    auto full = fs::weakly_canonical(root_ / rel, ec);
    if (ec) fail(ErrorCode::InvalidPath, "cannot resolve path: " + std::string(relative));
    const auto r = root_.native();
    const auto f = full.native();
    if (f != r && (f.size() <= r.size() || f.compare(0, r.size(), r) != 0 || f[r.size()] != '/'))
        fail(ErrorCode::InvalidPath, "path escapes the workspace: " + std::string(relative));
    return full;
}

std::string Workspace::key_of(const fs::path& resolved) const {
    return resolved.lexically_relative(root_).generic_string();
}

std::vector<std::string> Workspace::list_files(std::string_view dir_path) const {
    const auto dir = resolve(dir_path.empty() ? "." : dir_path);
    if (!fs::is_directory(dir)) fail(ErrorCode::InvalidPath, "not a directory: " + std::string(dir_path));
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto name = entry.path().filename().string();
        if (entry.is_directory()) name += '/';
        out.push_back(std::move(name));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void Workspace::copy_file(std::string_view source, std::string_view destination) {
    const auto src = resolve(source);
    resolve(destination);
    if (!fs::is_regular_file(src))
        fail(ErrorCode::SourceMissing, "cannot copy file: source '" + std::string(source) + "' does not exist");
    write_with_history(destination, text::read_file(src.string()), "copy from " + std::string(source));
}

bool Workspace::exists(std::string_view file) const {
    return fs::exists(resolve(file));
}

std::string Workspace::read_file(std::string_view file) const {
    const auto p = resolve(file);
    if (!fs::is_regular_file(p)) fail(ErrorCode::FileMissing, "file not found: " + std::string(file));
    return text::read_file(p.string());
}

std::string Workspace::read_lines(std::string_view script, long start, long end) const {
    if (start < 1 || end < start)
        fail(ErrorCode::InvalidRange, "invalid line range " + std::to_string(start) + "-" + std::to_string(end));
    if (end - start + 1 > static_cast<long>(kMaxInspectLines))
        fail(ErrorCode::RangeTooLarge, "at most " + std::to_string(kMaxInspectLines) + " lines can be inspected at once");
    const auto lines = text::split_lines_keep_endings(read_file(script));
    std::string out;
    for (long i = start; i <= end && i <= static_cast<long>(lines.size()); ++i) out += lines[static_cast<std::size_t>(i - 1)];
    return out;
}

EditRecord Workspace::write_with_history(std::string_view file, std::string_view new_content,
                                         std::optional<std::string> edit_instruction) {
    const auto p = resolve(file);
    if (fs::is_directory(p)) fail(ErrorCode::InvalidPath, "path is a directory: " + std::string(file));
    EditRecord rec;
    rec.file = key_of(p);
    rec.existed = fs::exists(p);
    if (rec.existed) rec.previous_content = text::read_file(p.string());
    rec.timestamp = std::chrono::system_clock::now();
    rec.edit_instruction = std::move(edit_instruction);

    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    text::write_file(p.string(), new_content);

    std::lock_guard lock(history_mutex_);
    history_[rec.file].push_back(rec);
    return rec;
}

std::string Workspace::undo_edit(std::string_view script) {
    const auto p = resolve(script);
    const auto key = key_of(p);
    EditRecord rec;
    {
        std::lock_guard lock(history_mutex_);
        auto it = history_.find(key);
        if (it == history_.end() || it->second.empty())
            fail(ErrorCode::NoHistory, "no edit to undo for " + std::string(script));
        rec = std::move(it->second.back());
        it->second.pop_back();
    }
    if (rec.existed) {
        text::write_file(p.string(), rec.previous_content);
    } else {
        std::error_code ec;
        fs::remove(p, ec);
    }
    return rec.previous_content;
}

std::size_t Workspace::history_depth(std::string_view file) const {
    const auto key = key_of(resolve(file));
    std::lock_guard lock(history_mutex_);
    auto it = history_.find(key);
    return it == history_.end() ? 0 : it->second.size();
}

std::vector<EditRecord> Workspace::history(std::string_view file) const {
    const auto key = key_of(resolve(file));
    std::lock_guard lock(history_mutex_);
    auto it = history_.find(key);
    return it == history_.end() ? std::vector<EditRecord>{} : it->second;
}

ExecutionResult Workspace::execute_script(std::string_view script, const std::vector<std::string>& args,
                                          const std::map<std::string, std::string>& extra_env) const {
    const auto p = resolve(script);
    if (!fs::is_regular_file(p)) fail(ErrorCode::FileMissing, "script not found: " + std::string(script));
    if (policy_.deny_network_install) {
        const auto body = text::read_file(p.string());
        if (looks_like_package_install(body) || looks_like_package_install(text::join(args, " ")))
            fail(ErrorCode::PolicyViolation, "installing packages is not allowed in the workspace");
    }
    std::vector<std::string> argv;
    const auto ext = p.extension().string();
    if (ext == ".py") argv = {"python3", p.string()};
    else if (ext == ".sh") argv = {"sh", p.string()};
    else argv = {p.string()};
    argv.insert(argv.end(), args.begin(), args.end());
    return spawn(argv, extra_env);
}

ExecutionResult Workspace::run_command(const std::string& command,
                                       const std::map<std::string, std::string>& extra_env) const {
    if (policy_.deny_network_install && looks_like_package_install(command))
        fail(ErrorCode::PolicyViolation, "installing packages is not allowed in the workspace");
    return spawn({"sh", "-c", command}, extra_env);
}

namespace {

struct Pipe {
    int fd[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fd, O_CLOEXEC) != 0) fail(ErrorCode::ExecFailed, std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    void close_read() {
        if (fd[0] >= 0) ::close(fd[0]);
        fd[0] = -1;
    }
    void close_write() {
        if (fd[1] >= 0) ::close(fd[1]);
        fd[1] = -1;
    }
};

void append_capped(std::string& dst, const char* data, std::size_t n, std::size_t cap, bool& truncated) {
    if (dst.size() < cap) {
        const auto take = std::min(n, cap - dst.size());
        dst.append(data, take);
        if (take < n) truncated = true;
    } else if (n > 0) {
        truncated = true;
    }
}

// Resolved before fork so the child only calls async-signal-safe functions.
std::string find_executable(const std::string& name, const std::string& path) {
    if (name.find('/') != std::string::npos) return name;
    for (const auto& dir : text::split(path, ':')) {
        if (dir.empty()) continue;
        const auto candidate = dir + "/" + name;
        if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    fail(ErrorCode::ExecFailed, "executable not found on PATH: " + name);
}

} // namespace

ExecutionResult Workspace::spawn(const std::vector<std::string>& argv,
                                 const std::map<std::string, std::string>& extra_env) const {
    std::lock_guard exec_lock(exec_mutex_);

    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        const std::string key(kv.substr(0, eq));
        if (std::find(policy_.env_allowlist.begin(), policy_.env_allowlist.end(), key) != policy_.env_allowlist.end())
            env[key] = std::string(kv.substr(eq + 1));
    }
    env["PYTHONDONTWRITEBYTECODE"] = "1";
    for (const auto& [k, v] : extra_env) env[k] = v;
    if (!env.count("PATH")) env["PATH"] = "/usr/local/bin:/usr/bin:/bin";

    std::vector<std::string> env_strings;
    for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::vector<std::string> args = argv;
    std::vector<char*> cargv;
    for (auto& s : args) cargv.push_back(s.data());
    cargv.push_back(nullptr);
    const std::string cwd = root_.string();
    const std::string exe = find_executable(args.front(), env["PATH"]);

    Pipe out, err;
    const auto started = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) fail(ErrorCode::ExecFailed, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        sigset_t none;
        sigemptyset(&none);
        ::sigprocmask(SIG_SETMASK, &none, nullptr);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (::chdir(cwd.c_str()) != 0) ::_exit(126);
        ::execve(exe.c_str(), cargv.data(), envp.data());
        const char msg[] = "exec failed\n";
        [[maybe_unused]] auto w = ::write(STDERR_FILENO, msg, sizeof msg - 1);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    out.close_write();
    err.close_write();

    ExecutionResult result;
    const auto deadline = started + policy_.timeout;
    const std::size_t cap = policy_.max_output_bytes;
    bool timed_out = false;
    char buf[8192];
    pollfd fds[2] = {{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}};
    int open_fds = 2;
    while (open_fds > 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        const int rc = ::poll(fds, 2, static_cast<int>(std::min<long long>(wait_ms + 1, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const auto n = ::read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                append_capped(i == 0 ? result.stdout_text : result.stderr_text, buf, static_cast<std::size_t>(n), cap,
                              result.truncated);
            } else if (n == 0 || errno != EINTR) {
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }

    int status = 0;
    if (timed_out) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        fail(ErrorCode::TimedOut, "script exceeded the " + std::to_string(policy_.timeout.count()) + " ms timeout and was killed");
    }
    // Pipes are closed; the child has exited or is about to.
    while (true) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            fail(ErrorCode::TimedOut, "script exceeded the " + std::to_string(policy_.timeout.count()) + " ms timeout and was killed");
        }
        ::usleep(2000);
    }
    ::kill(-pid, SIGKILL); // stray grandchildren

    result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
    if (result.truncated) {
        if (result.stdout_text.size() >= cap) result.stdout_text += kOutputTruncatedMarker;
        if (result.stderr_text.size() >= cap) result.stderr_text += kOutputTruncatedMarker;
    }
    return result;
}

} // namespace autoresearch::sandbox
