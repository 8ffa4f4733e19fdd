#pragma once
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace autoresearch {

enum class Direction { HigherBetter, LowerBetter };

std::string_view direction_name(Direction d);
// Accepts higher_better / lower_better. Throws InvalidArgument.
Direction parse_direction(std::string_view s);

// A task package: task.meta, prototype/ and optionally fixtures/.
//
// task.meta holds "key: value" lines; '#' starts a comment. Keys: name,
// metric, direction, baseline_command, eval_command, train_entrypoint,
// predict_entrypoint. The two entrypoints may name a script inside the
// workspace or "builtin:linear".
struct TaskPackage {
    std::filesystem::path root;
    std::string name;
    std::string metric;
    Direction direction = Direction::HigherBetter;
    std::string baseline_command;
    std::string eval_command;
    std::string train_entrypoint;
    std::string predict_entrypoint;

    std::filesystem::path prototype_dir() const { return root / "prototype"; }
    std::optional<std::filesystem::path> fixtures_dir() const;

    // Throws FileMissing, SchemaError.
    static TaskPackage load(const std::filesystem::path& root);
};

inline constexpr std::string_view kBuiltinLinear = "builtin:linear";

// Value of the last "<metric>: <number>" (or '=') occurrence in output,
// matched case-insensitively.
std::optional<double> metric_from_output(std::string_view output, std::string_view metric);

} // namespace autoresearch
