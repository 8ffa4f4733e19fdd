#include "autoresearch/task.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <map>
#include <regex>

namespace autoresearch {

namespace fs = std::filesystem;

std::string_view direction_name(Direction d) {
    return d == Direction::HigherBetter ? "higher_better" : "lower_better";
}

Direction parse_direction(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "higher_better" || v == "higher") return Direction::HigherBetter;
    if (v == "lower_better" || v == "lower") return Direction::LowerBetter;
    fail(ErrorCode::InvalidArgument, "unknown metric direction '" + std::string(s) + "'");
}

std::optional<fs::path> TaskPackage::fixtures_dir() const {
    const auto p = root / "fixtures";
    if (fs::is_directory(p)) return p;
    return std::nullopt;
}

TaskPackage TaskPackage::load(const fs::path& root) {
    const auto meta_path = root / "task.meta";
    if (!fs::is_regular_file(meta_path)) fail(ErrorCode::FileMissing, "task package has no task.meta: " + root.string());
    if (!fs::is_directory(root / "prototype"))
        fail(ErrorCode::FileMissing, "task package has no prototype/ directory: " + root.string());

    std::map<std::string, std::string> kv;
    int lineno = 0;
    for (const auto& raw : text::split_lines(text::read_file(meta_path.string()))) {
        ++lineno;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            fail(ErrorCode::SchemaError, "task.meta line " + std::to_string(lineno) + " is not 'key: value'");
        kv[text::to_lower(text::trim(line.substr(0, colon)))] = text::trim(line.substr(colon + 1));
    }
    auto need = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end() || it->second.empty()) fail(ErrorCode::SchemaError, std::string("task.meta is missing '") + key + "'");
        return it->second;
    };
    auto opt = [&](const char* key) {
        auto it = kv.find(key);
        return it == kv.end() ? std::string() : it->second;
    };

    TaskPackage t;
    t.root = fs::absolute(root).lexically_normal();
    t.name = need("name");
    t.metric = need("metric");
    try {
        t.direction = parse_direction(need("direction"));
    } catch (const Error& e) {
        fail(ErrorCode::SchemaError, std::string("task.meta: ") + e.what());
    }
    t.baseline_command = need("baseline_command");
    t.eval_command = opt("eval_command");
    if (t.eval_command.empty()) t.eval_command = t.baseline_command;
    t.train_entrypoint = opt("train_entrypoint");
    t.predict_entrypoint = opt("predict_entrypoint");
    return t;
}

std::optional<double> metric_from_output(std::string_view output, std::string_view metric) {
    std::string escaped;
    for (char c : metric) {
        if (std::string_view("\\^$.|?*+()[]{}").find(c) != std::string_view::npos) escaped += '\\';
        escaped += c;
    }
    const std::regex re("(^|[^A-Za-z0-9_])" + escaped +
                            R"(\s*[:=]\s*([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?))",
                        std::regex::icase);
    const std::string s(output);
    std::optional<double> last;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
        last = text::parse_number((*it)[2].str());
    return last;
}

} // namespace autoresearch
