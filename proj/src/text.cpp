#include "autoresearch/text.hpp"
#include "autoresearch/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace autoresearch {

std::string_view code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingTitle: return "MissingTitle";
    case ErrorCode::EmptyExtraction: return "EmptyExtraction";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::TransientProviderError: return "TransientProviderError";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SessionMismatch: return "SessionMismatch";
    case ErrorCode::SessionExhausted: return "SessionExhausted";
    case ErrorCode::InvalidPath: return "InvalidPath";
    case ErrorCode::SourceMissing: return "SourceMissing";
    case ErrorCode::FileMissing: return "FileMissing";
    case ErrorCode::RangeTooLarge: return "RangeTooLarge";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::NoHistory: return "NoHistory";
    case ErrorCode::TimedOut: return "TimedOut";
    case ErrorCode::PolicyViolation: return "PolicyViolation";
    case ErrorCode::DuplicateTool: return "DuplicateTool";
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::HubUnavailable: return "HubUnavailable";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::WriteError: return "WriteError";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TransformFailed: return "TransformFailed";
    case ErrorCode::TrainFailed: return "TrainFailed";
    case ErrorCode::MissingEntrypoint: return "MissingEntrypoint";
    case ErrorCode::ArtifactMissing: return "ArtifactMissing";
    case ErrorCode::ExecFailed: return "ExecFailed";
    case ErrorCode::RowMismatch: return "RowMismatch";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::EmptyTrials: return "EmptyTrials";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::StorageError: return "StorageError";
    case ErrorCode::RunTerminal: return "RunTerminal";
    case ErrorCode::RunNotAttached: return "RunNotAttached";
    case ErrorCode::FeedbackTimeout: return "FeedbackTimeout";
    case ErrorCode::Unauthorized: return "Unauthorized";
    }
    return "Unknown";
}

namespace text {

namespace {
bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
char lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}
bool is_alnum(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}
} // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string trim_right(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && is_space(s[e - 1])) --e;
    return std::string(s.substr(0, e));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = lower(c);
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (lower(s[i]) != lower(prefix[i])) return false;
    return true;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && starts_with_ci(a, b);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::vector<std::string> split_lines_keep_endings(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\n') {
            out.emplace_back(s.substr(start, i + 1 - start));
            start = i + 1;
        }
    }
    if (start < s.size()) out.emplace_back(s.substr(start));
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    auto lines = split_lines_keep_endings(s);
    for (auto& l : lines) {
        if (!l.empty() && l.back() == '\n') l.pop_back();
        if (!l.empty() && l.back() == '\r') l.pop_back();
    }
    return lines;
}

std::vector<std::string> alnum_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_alnum(c)) {
            cur.push_back(lower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_space(c)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

std::string normalize_title(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(lower(c));
    }
    return out;
}

std::size_t utf8_safe_prefix(std::string_view s, std::size_t max_bytes) {
    if (max_bytes >= s.size()) return s.size();
    std::size_t n = max_bytes;
    // Back off while the byte at the cut is a continuation byte.
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
    return n;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    auto t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0;
    const char* first = t.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::FileMissing, "cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::WriteError, "cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::WriteError, "short write: " + path);
}

} // namespace text
} // namespace autoresearch
