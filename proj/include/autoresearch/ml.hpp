#pragma once
#include "autoresearch/gateway.hpp"
#include "autoresearch/idea.hpp"
#include "autoresearch/task.hpp"
#include "autoresearch/workspace.hpp"

#include <json.hpp>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::ml {

namespace fs = std::filesystem;

// ---- on-disk datasets ------------------------------------------------------
//
// <dir>/manifest.json  {"name", "columns": [...], "splits": [{"name", "row_count", "file"}]}
// <dir>/<split>.tsv    header row of column names, then one row per line;
//                      tab, newline, carriage return and backslash are escaped.

struct SplitInfo {
    std::string name;
    std::size_t row_count = 0;
    std::string file;
    bool operator==(const SplitInfo&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<std::string> columns;
    std::vector<SplitInfo> splits;

    const SplitInfo* split(std::string_view name) const;
};

using Row = std::vector<std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<Row> rows;

    // Throws InvalidArgument for an unknown column.
    std::size_t column_index(std::string_view name) const;
    std::vector<std::string> column(std::string_view name) const;
};

std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

// Writes every split and the manifest. Declared columns must match every row.
DatasetManifest write_dataset(const fs::path& dir, const std::string& name, const std::vector<std::string>& columns,
                              const std::vector<std::pair<std::string, std::vector<Row>>>& splits);
DatasetManifest read_manifest(const fs::path& dir);
Table read_split(const fs::path& dir, std::string_view split);

// ---- hubs -----------------------------------------------------------------

struct ModelCandidate {
    std::string name;
    std::string description;
    double score = 0.0;
    std::vector<std::string> task_tags;
    bool operator==(const ModelCandidate&) const = default;
};

struct DatasetCandidate {
    std::string name;
    std::string description;
    std::vector<SplitInfo> splits;
    std::vector<std::string> columns;
    fs::path save_dir;
};

struct HubEntry {
    std::string name;
    std::string description;
    std::vector<std::string> tags;
    double score = 0.0;
    std::string source; // hub-specific locator used when materializing
};

class Hub {
public:
    virtual ~Hub() = default;
    virtual std::vector<ModelCandidate> search_models(std::string_view instruction, std::size_t limit) = 0;
    virtual std::vector<HubEntry> search_datasets(std::string_view instruction, std::size_t limit) = 0;
    // Writes the dataset to save_dir in the on-disk format.
    virtual DatasetCandidate materialize(const HubEntry& entry, const fs::path& save_dir) = 0;
};

// Instruction tokens used for matching: lowercase alphanumerics minus
// stopwords, in first-seen order.
std::vector<std::string> instruction_terms(std::string_view instruction);

// Record files of {name, description, tags, score}. Dataset records also
// carry either "path" (a dataset directory, relative to the record file) or
// inline "columns" plus "splits": {split: [[cell, ...], ...]}.
class StubHub : public Hub {
public:
    StubHub(std::vector<HubEntry> models, std::vector<HubEntry> datasets, fs::path base_dir = {});
    static StubHub from_files(const std::optional<fs::path>& models_file, const std::optional<fs::path>& datasets_file);

    std::vector<ModelCandidate> search_models(std::string_view instruction, std::size_t limit) override;
    std::vector<HubEntry> search_datasets(std::string_view instruction, std::size_t limit) override;
    DatasetCandidate materialize(const HubEntry& entry, const fs::path& save_dir) override;

private:
    std::vector<HubEntry> models_;
    std::vector<HubEntry> datasets_;
    fs::path base_dir_;
};

struct HttpHubConfig {
    std::string base_url = "https://huggingface.co";
    std::string rows_base_url = "https://datasets-server.huggingface.co";
    std::string token_env = "HF_TOKEN";
    std::size_t max_rows_per_split = 1000;
    std::chrono::seconds timeout{30};
};

// Model and dataset hub over the public hub search API, with dataset rows
// fetched from the dataset viewer service.
class HttpHub : public Hub {
public:
    explicit HttpHub(HttpHubConfig config);

    std::vector<ModelCandidate> search_models(std::string_view instruction, std::size_t limit) override;
    std::vector<HubEntry> search_datasets(std::string_view instruction, std::size_t limit) override;
    DatasetCandidate materialize(const HubEntry& entry, const fs::path& save_dir) override;

private:
    nlohmann::json get_json(const std::string& base_url, const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& params);
    HttpHubConfig config_;
};

// Ranked by score desc then name asc, names unique. Empty is allowed.
std::vector<ModelCandidate> retrieve_model(std::string_view instruction, Hub& hub, std::size_t limit = 5);

// Materializes the best match. Throws NoMatch, HubUnavailable, WriteError.
DatasetCandidate retrieve_dataset(std::string_view instruction, const fs::path& save_dir, Hub& hub);

// ---- post-checkup -----------------------------------------------------------

struct DataRequirements {
    std::vector<std::string> columns;
    std::vector<std::string> splits;
    std::string metric;
    std::string target_column;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct AlignmentReport {
    bool passed = true;
    std::vector<CheckResult> checks;
    std::string render() const;
};

// Reads split and metric mentions out of the plan text.
DataRequirements derive_requirements(const idea::ExperimentPlan& plan, std::string_view metric_hint = {});

AlignmentReport post_checkup(const DatasetCandidate& dataset, const DataRequirements& requirements);
AlignmentReport post_checkup(const DatasetCandidate& dataset, const idea::ExperimentPlan& plan);

// ---- processing, training, prediction, evaluation ---------------------------

std::vector<std::string> split_dirs(std::string_view colon_list);

struct ProcessReport {
    std::vector<std::pair<std::string, std::size_t>> rows_per_split;
    std::string message;
};

// Asks the model for a Python transform(row) function and runs it in the
// workspace over every split. Output rows carry model_input and model_output.
// Throws CountMismatch, TransformFailed, FileMissing.
ProcessReport process_dataset(std::string_view instruction, const std::vector<std::string>& load_dirs,
                              const std::vector<std::string>& save_dirs, llm::Gateway& gateway,
                              sandbox::Workspace& workspace);

struct Hyperparameters {
    long epochs = 0;
    long batch_size = 0;
    long warmup_steps = 0;
    double weight_decay = 0.0;
    double learning_rate = 0.0;

    void validate() const; // TrainFailed
};

struct LinearModel {
    double w = 0.0;
    double b = 0.0;
};

struct LinearTrainLog {
    LinearModel model;
    std::vector<double> epoch_loss;
};

// Mini-batch gradient descent on mean squared error with linear warmup and
// L2 weight decay on w. Batches follow data order.
LinearTrainLog train_linear(const std::vector<double>& x, const std::vector<double>& y, const Hyperparameters& hp);

struct TrainReport {
    fs::path result_dir;
    nlohmann::json metrics;
    std::string message;
};

// Throws TrainFailed, MissingEntrypoint.
TrainReport train_model(const TaskPackage& task, const std::string& model_name,
                        const std::vector<std::string>& load_dirs, const std::string& result_dir,
                        const Hyperparameters& hp, sandbox::Workspace& workspace);

// Throws ArtifactMissing, ExecFailed. Returns the number of predictions.
std::size_t execute_on_test(const TaskPackage& task, const std::string& result_dir,
                            const std::vector<std::string>& load_dirs, const std::string& save_path, long batch_size,
                            const std::string& input_column, sandbox::Workspace& workspace);

// Throws RowMismatch, UnknownMetric, InvalidArgument.
double compute_metric(std::string_view metric, const std::vector<std::string>& references,
                      const std::vector<std::string>& predictions);
bool is_known_metric(std::string_view metric);

// Predictions file: a JSON array of {"prediction": value} records, or an
// object with such an array under "predictions".
std::vector<std::string> read_predictions(const fs::path& path);

std::map<std::string, double> evaluate_predictions(const std::vector<std::string>& load_dirs,
                                                   const std::string& save_path, const std::string& output_column,
                                                   const std::vector<std::string>& metrics,
                                                   sandbox::Workspace& workspace);

} // namespace autoresearch::ml
