#include "autoresearch/ml.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"
#include "http_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace autoresearch::ml {

using nlohmann::json;

namespace {
std::string dump(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}
} // namespace

// ---- on-disk datasets --------------------------------------------------------

const SplitInfo* DatasetManifest::split(std::string_view n) const {
    for (const auto& s : splits)
        if (s.name == n) return &s;
    return nullptr;
}

std::size_t Table::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    fail(ErrorCode::InvalidArgument, "unknown column '" + std::string(name) + "'");
}

std::vector<std::string> Table::column(std::string_view name) const {
    const auto idx = column_index(name);
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[idx]);
    return out;
}

std::string escape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 == s.size()) {
            out += s[i];
            continue;
        }
        const char e = s[++i];
        switch (e) {
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        default: out += e;
        }
    }
    return out;
}

namespace {

std::string split_file_name(const std::string& split) {
    std::string out;
    for (char c : split) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    if (out.empty()) fail(ErrorCode::InvalidArgument, "empty split name");
    return out + ".tsv";
}

std::string tsv_line(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += '\t';
        line += escape_field(cells[i]);
    }
    line += '\n';
    return line;
}

} // namespace

DatasetManifest write_dataset(const fs::path& dir, const std::string& name, const std::vector<std::string>& columns,
                              const std::vector<std::pair<std::string, std::vector<Row>>>& splits) {
    if (columns.empty()) fail(ErrorCode::InvalidArgument, "dataset needs at least one column");
    if (splits.empty()) fail(ErrorCode::InvalidArgument, "dataset needs at least one split");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::WriteError, "cannot create dataset directory " + dir.string() + ": " + ec.message());

    DatasetManifest m;
    m.name = name;
    m.columns = columns;
    for (const auto& [split, rows] : splits) {
        std::string body = tsv_line(columns);
        for (const auto& r : rows) {
            if (r.size() != columns.size())
                fail(ErrorCode::InvalidArgument, "row in split '" + split + "' has " + std::to_string(r.size()) +
                                                     " cells, expected " + std::to_string(columns.size()));
            body += tsv_line(r);
        }
        SplitInfo info{split, rows.size(), split_file_name(split)};
        text::write_file((dir / info.file).string(), body);
        m.splits.push_back(std::move(info));
    }
    json splits_j = json::array();
    for (const auto& s : m.splits) splits_j.push_back({{"name", s.name}, {"row_count", s.row_count}, {"file", s.file}});
    const json manifest = {{"name", m.name}, {"columns", m.columns}, {"splits", splits_j}};
    text::write_file((dir / "manifest.json").string(), dump(manifest, 2) + "\n");
    return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    if (!fs::is_regular_file(path)) fail(ErrorCode::FileMissing, "no dataset manifest in " + dir.string());
    try {
        const auto j = json::parse(text::read_file(path.string()));
        DatasetManifest m;
        m.name = j.value("name", "");
        m.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& s : j.at("splits"))
            m.splits.push_back({s.at("name").get<std::string>(), s.at("row_count").get<std::size_t>(),
                                s.at("file").get<std::string>()});
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, "bad dataset manifest " + path.string() + ": " + e.what());
    }
}

Table read_split(const fs::path& dir, std::string_view split) {
    const auto m = read_manifest(dir);
    const auto* info = m.split(split);
    if (!info) fail(ErrorCode::FileMissing, "dataset " + dir.string() + " has no split '" + std::string(split) + "'");
    const auto lines = text::split_lines(text::read_file((dir / info->file).string()));
    Table t;
    t.columns = m.columns;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty() && i + 1 == lines.size()) break;
        Row row;
        for (const auto& cell : text::split(lines[i], '\t')) row.push_back(unescape_field(cell));
        if (row.size() != t.columns.size())
            fail(ErrorCode::SchemaError, "split '" + std::string(split) + "' line " + std::to_string(i + 1) +
                                             " has " + std::to_string(row.size()) + " cells");
        t.rows.push_back(std::move(row));
    }
    if (t.rows.size() != info->row_count)
        fail(ErrorCode::SchemaError, "split '" + std::string(split) + "' holds " + std::to_string(t.rows.size()) +
                                         " rows but the manifest says " + std::to_string(info->row_count));
    return t;
}

// ---- hubs ------------------------------------------------------------------

std::vector<std::string> instruction_terms(std::string_view instruction) {
    static const std::set<std::string> stop = {
        "a", "an", "the", "and", "or", "of", "to", "for", "in", "on", "with", "by", "from", "that", "this",
        "is", "are", "be", "as", "at", "it", "its", "into", "using", "use", "based", "model", "models",
        "dataset", "datasets", "retrieve", "suitable", "find", "get", "load", "data", "which", "we", "i",
        "should", "can", "will", "some", "any", "similar", "like", "e", "g", "eg"};
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& t : text::alnum_tokens(instruction)) {
        if (t.size() < 2 && !std::isdigit(static_cast<unsigned char>(t[0]))) continue;
        if (stop.count(t) || !seen.insert(t).second) continue;
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

std::size_t entry_overlap(const std::vector<std::string>& terms, const HubEntry& e) {
    std::string hay = e.name + " " + e.description;
    for (const auto& t : e.tags) hay += " " + t;
    const auto tokens = text::alnum_tokens(hay);
    const std::set<std::string> bag(tokens.begin(), tokens.end());
    std::size_t n = 0;
    for (const auto& t : terms) n += bag.count(t);
    return n;
}

bool rank_before(const HubEntry& a, const HubEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name < b.name;
}

std::vector<HubEntry> match_entries(const std::vector<HubEntry>& entries, std::string_view instruction,
                                    std::size_t limit) {
    const auto terms = instruction_terms(instruction);
    std::vector<HubEntry> hits;
    for (const auto& e : entries)
        if (terms.empty() || entry_overlap(terms, e) > 0) hits.push_back(e);
    std::stable_sort(hits.begin(), hits.end(), rank_before);
    std::vector<HubEntry> out;
    std::set<std::string> names;
    for (auto& h : hits) {
        if (out.size() >= limit) break;
        if (names.insert(h.name).second) out.push_back(std::move(h));
    }
    return out;
}

std::vector<json> read_records(const fs::path& path) {
    const auto body = text::trim(text::read_file(path.string()));
    std::vector<json> out;
    if (body.empty()) return out;
    try {
        if (body.front() == '[') {
            for (auto& r : json::parse(body)) out.push_back(r);
        } else {
            for (const auto& line : text::split_lines(body))
                if (!text::trim(line).empty()) out.push_back(json::parse(line));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, "bad hub record file " + path.string() + ": " + e.what());
    }
    return out;
}

HubEntry entry_from_record(const json& r, const fs::path& base) {
    if (!r.is_object() || !r.contains("name") || !r["name"].is_string())
        fail(ErrorCode::SchemaError, "hub record needs a string 'name'");
    HubEntry e;
    e.name = r["name"].get<std::string>();
    e.description = r.value("description", "");
    if (r.contains("tags") && r["tags"].is_array())
        for (const auto& t : r["tags"])
            if (t.is_string()) e.tags.push_back(t.get<std::string>());
    if (r.contains("score") && r["score"].is_number()) e.score = r["score"].get<double>();
    if (r.contains("path") && r["path"].is_string()) {
        fs::path p = r["path"].get<std::string>();
        e.source = (p.is_absolute() ? p : base / p).lexically_normal().string();
    } else if (r.contains("splits")) {
        e.source = "inline:" + dump({{"columns", r.value("columns", json::array())}, {"splits", r["splits"]}});
    }
    return e;
}

} // namespace

StubHub::StubHub(std::vector<HubEntry> models, std::vector<HubEntry> datasets, fs::path base_dir)
    : models_(std::move(models)), datasets_(std::move(datasets)), base_dir_(std::move(base_dir)) {}

StubHub StubHub::from_files(const std::optional<fs::path>& models_file, const std::optional<fs::path>& datasets_file) {
    std::vector<HubEntry> models, datasets;
    if (models_file)
        for (const auto& r : read_records(*models_file)) models.push_back(entry_from_record(r, models_file->parent_path()));
    fs::path base;
    if (datasets_file) {
        base = datasets_file->parent_path();
        for (const auto& r : read_records(*datasets_file)) datasets.push_back(entry_from_record(r, base));
    }
    return StubHub(std::move(models), std::move(datasets), base);
}

std::vector<ModelCandidate> StubHub::search_models(std::string_view instruction, std::size_t limit) {
    std::vector<ModelCandidate> out;
    for (auto& e : match_entries(models_, instruction, limit))
        out.push_back({e.name, e.description, e.score, e.tags});
    return out;
}

std::vector<HubEntry> StubHub::search_datasets(std::string_view instruction, std::size_t limit) {
    return match_entries(datasets_, instruction, limit);
}

DatasetCandidate StubHub::materialize(const HubEntry& entry, const fs::path& save_dir) {
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::vector<Row>>> splits;
    if (entry.source.rfind("inline:", 0) == 0) {
        const auto j = json::parse(entry.source.substr(7));
        columns = j.at("columns").get<std::vector<std::string>>();
        for (auto it = j.at("splits").begin(); it != j.at("splits").end(); ++it) {
            std::vector<Row> rows;
            for (const auto& r : it.value()) {
                Row row;
                for (const auto& c : r) row.push_back(c.is_string() ? c.get<std::string>() : dump(c));
                rows.push_back(std::move(row));
            }
            splits.emplace_back(it.key(), std::move(rows));
        }
    } else if (!entry.source.empty()) {
        const auto m = read_manifest(entry.source);
        columns = m.columns;
        for (const auto& s : m.splits) splits.emplace_back(s.name, read_split(entry.source, s.name).rows);
    } else {
        fail(ErrorCode::HubUnavailable, "hub entry '" + entry.name + "' has no data source");
    }
    const auto m = write_dataset(save_dir, entry.name, columns, splits);
    return {entry.name, entry.description, m.splits, m.columns, save_dir};
}

HttpHub::HttpHub(HttpHubConfig config) : config_(std::move(config)) {}

json HttpHub::get_json(const std::string& base_url, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& params) {
    const auto base = detail::split_base_url(base_url);
    auto client = detail::make_client(base, config_.timeout);
    httplib::Headers headers;
    if (!config_.token_env.empty())
        if (const char* tok = std::getenv(config_.token_env.c_str()); tok && *tok)
            headers.emplace("Authorization", std::string("Bearer ") + tok);
    httplib::Params p;
    for (const auto& [k, v] : params) p.emplace(k, v);
    auto res = client->Get(base.path_prefix + path, p, headers);
    if (!res) fail(ErrorCode::HubUnavailable, "hub request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        fail(ErrorCode::HubUnavailable, "hub returned HTTP " + std::to_string(res->status) + " for " + path);
    auto j = json::parse(res->body, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::HubUnavailable, "hub returned a non-JSON body for " + path);
    return j;
}

namespace {

std::string hub_query(std::string_view instruction) {
    auto terms = instruction_terms(instruction);
    if (terms.size() > 3) terms.resize(3);
    return text::join(terms, " ");
}

std::vector<HubEntry> hub_listing(const json& arr) {
    std::vector<HubEntry> out;
    if (!arr.is_array()) fail(ErrorCode::HubUnavailable, "hub search did not return a list");
    for (const auto& r : arr) {
        if (!r.is_object()) continue;
        HubEntry e;
        if (r.contains("id") && r["id"].is_string()) e.name = r["id"].get<std::string>();
        else if (r.contains("modelId") && r["modelId"].is_string()) e.name = r["modelId"].get<std::string>();
        if (e.name.empty()) continue;
        if (r.contains("pipeline_tag") && r["pipeline_tag"].is_string()) e.description = r["pipeline_tag"].get<std::string>();
        if (r.contains("description") && r["description"].is_string()) e.description = r["description"].get<std::string>();
        if (r.contains("tags") && r["tags"].is_array())
            for (const auto& t : r["tags"])
                if (t.is_string()) e.tags.push_back(t.get<std::string>());
        if (r.contains("downloads") && r["downloads"].is_number()) e.score = r["downloads"].get<double>();
        else if (r.contains("likes") && r["likes"].is_number()) e.score = r["likes"].get<double>();
        e.source = e.name;
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(), rank_before);
    return out;
}

} // namespace

std::vector<ModelCandidate> HttpHub::search_models(std::string_view instruction, std::size_t limit) {
    const auto q = hub_query(instruction);
    auto listing = hub_listing(get_json(config_.base_url, "/api/models",
                                        {{"search", q}, {"limit", std::to_string(limit)}, {"sort", "downloads"}}));
    std::vector<ModelCandidate> out;
    for (auto& e : listing) {
        if (out.size() >= limit) break;
        out.push_back({e.name, e.description, e.score, e.tags});
    }
    return out;
}

std::vector<HubEntry> HttpHub::search_datasets(std::string_view instruction, std::size_t limit) {
    const auto q = hub_query(instruction);
    auto listing = hub_listing(get_json(config_.base_url, "/api/datasets",
                                        {{"search", q}, {"limit", std::to_string(limit)}, {"sort", "downloads"}}));
    if (listing.size() > limit) listing.resize(limit);
    return listing;
}

DatasetCandidate HttpHub::materialize(const HubEntry& entry, const fs::path& save_dir) {
    const auto splits_j = get_json(config_.rows_base_url, "/splits", {{"dataset", entry.source}});
    if (!splits_j.contains("splits") || !splits_j["splits"].is_array() || splits_j["splits"].empty())
        fail(ErrorCode::HubUnavailable, "dataset '" + entry.name + "' lists no splits");
    const auto config = splits_j["splits"][0].value("config", "default");
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::vector<Row>>> splits;
    for (const auto& s : splits_j["splits"]) {
        if (s.value("config", "") != config) continue;
        const auto split = s.value("split", "");
        if (split.empty()) continue;
        std::vector<Row> rows;
        std::size_t offset = 0;
        while (rows.size() < config_.max_rows_per_split) {
            const auto length = std::min<std::size_t>(100, config_.max_rows_per_split - rows.size());
            const auto page = get_json(config_.rows_base_url, "/rows",
                                       {{"dataset", entry.source}, {"config", config}, {"split", split},
                                        {"offset", std::to_string(offset)}, {"length", std::to_string(length)}});
            if (columns.empty() && page.contains("features"))
                for (const auto& f : page["features"]) columns.push_back(f.value("name", ""));
            if (!page.contains("rows") || !page["rows"].is_array() || page["rows"].empty()) break;
            for (const auto& r : page["rows"]) {
                const auto& cells = r.contains("row") ? r["row"] : r;
                Row row;
                for (const auto& c : columns) {
                    if (!cells.contains(c) || cells[c].is_null()) row.emplace_back();
                    else row.push_back(cells[c].is_string() ? cells[c].get<std::string>() : dump(cells[c]));
                }
                rows.push_back(std::move(row));
            }
            offset += page["rows"].size();
            if (page.contains("num_rows_total") && page["num_rows_total"].is_number() &&
                offset >= page["num_rows_total"].get<std::size_t>())
                break;
        }
        splits.emplace_back(split, std::move(rows));
    }
    if (columns.empty() || splits.empty()) fail(ErrorCode::HubUnavailable, "dataset '" + entry.name + "' has no rows");
    const auto m = write_dataset(save_dir, entry.name, columns, splits);
    return {entry.name, entry.description, m.splits, m.columns, save_dir};
}

std::vector<ModelCandidate> retrieve_model(std::string_view instruction, Hub& hub, std::size_t limit) {
    auto out = hub.search_models(instruction, limit);
    std::stable_sort(out.begin(), out.end(), [](const ModelCandidate& a, const ModelCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    std::vector<ModelCandidate> unique;
    std::set<std::string> names;
    for (auto& m : out)
        if (names.insert(m.name).second) unique.push_back(std::move(m));
    return unique;
}

DatasetCandidate retrieve_dataset(std::string_view instruction, const fs::path& save_dir, Hub& hub) {
    auto hits = hub.search_datasets(instruction, 5);
    if (hits.empty()) fail(ErrorCode::NoMatch, "no dataset matches the instruction");
    return hub.materialize(hits.front(), save_dir);
}

// ---- post-checkup ------------------------------------------------------------

std::string AlignmentReport::render() const {
    std::string s = passed ? "post-checkup passed" : "post-checkup failed";
    s += " (" + std::to_string(checks.size()) + " checks)\n";
    for (const auto& c : checks) s += (c.passed ? "  ok   " : "  FAIL ") + c.name + ": " + c.detail + "\n";
    return s;
}

DataRequirements derive_requirements(const idea::ExperimentPlan& plan, std::string_view metric_hint) {
    const auto t = text::to_lower(plan.raw + "\n" + plan.rationale);
    const auto tokens = text::alnum_tokens(t);
    const std::set<std::string> bag(tokens.begin(), tokens.end());
    auto has = [&](std::string_view phrase) { return t.find(phrase) != std::string::npos; };
    DataRequirements r;
    if (bag.count("train") || bag.count("training")) r.splits.push_back("train");
    if (has("test set") || has("test split") || has("held-out") || has("testing set")) r.splits.push_back("test");
    if (has("validation set") || has("validation split")) r.splits.push_back("validation");
    if (!metric_hint.empty()) {
        r.metric = std::string(metric_hint);
    } else if (bag.count("accuracy")) {
        r.metric = "accuracy";
    } else if (bag.count("rmse")) {
        r.metric = "rmse";
    } else if (bag.count("mse") || has("mean squared error")) {
        r.metric = "mse";
    } else if (bag.count("pearson")) {
        r.metric = "pearson";
    }
    return r;
}

AlignmentReport post_checkup(const DatasetCandidate& dataset, const DataRequirements& req) {
    AlignmentReport rep;
    auto add = [&](std::string name, bool ok, std::string detail) {
        rep.checks.push_back({std::move(name), ok, std::move(detail)});
    };
    auto find_split = [&](const std::string& s) -> const SplitInfo* {
        for (const auto& x : dataset.splits)
            if (x.name == s) return &x;
        return nullptr;
    };
    for (const auto& s : req.splits) {
        const auto* info = find_split(s);
        add("split:" + s, info != nullptr, info ? "present" : "split '" + s + "' is missing");
    }
    for (const auto& c : req.columns) {
        const bool ok = std::find(dataset.columns.begin(), dataset.columns.end(), c) != dataset.columns.end();
        add("column:" + c, ok, ok ? "present" : "column '" + c + "' is missing");
    }
    for (const auto& s : req.splits) {
        if (const auto* info = find_split(s))
            add("rows:" + s, info->row_count > 0, std::to_string(info->row_count) + " rows");
    }
    if (!req.metric.empty()) {
        std::string detail;
        bool ok = is_known_metric(req.metric);
        if (!ok) detail = "metric '" + req.metric + "' is not supported";
        if (ok && !req.target_column.empty()) {
            const bool present =
                std::find(dataset.columns.begin(), dataset.columns.end(), req.target_column) != dataset.columns.end();
            if (!present) {
                ok = false;
                detail = "target column '" + req.target_column + "' is missing";
            } else if (text::to_lower(req.metric) != "accuracy" && !dataset.save_dir.empty() && !dataset.splits.empty()) {
                try {
                    const auto t = read_split(dataset.save_dir, dataset.splits.front().name);
                    for (const auto& v : t.column(req.target_column)) {
                        if (!text::parse_number(v)) {
                            ok = false;
                            detail = "target column '" + req.target_column + "' holds non-numeric value '" + v + "'";
                            break;
                        }
                    }
                } catch (const Error& e) {
                    ok = false;
                    detail = e.what();
                }
            }
        }
        add("metric:" + req.metric, ok, ok ? "computable" : detail);
    }
    rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(), [](const CheckResult& c) { return c.passed; });
    return rep;
}

AlignmentReport post_checkup(const DatasetCandidate& dataset, const idea::ExperimentPlan& plan) {
    return post_checkup(dataset, derive_requirements(plan));
}

// ---- processing ----------------------------------------------------------------

std::vector<std::string> split_dirs(std::string_view colon_list) {
    std::vector<std::string> out;
    for (const auto& p : text::split(colon_list, ':')) {
        auto t = text::trim(p);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

namespace {

const char* kHarnessDir = ".autoresearch";

const char* kHarnessTail = R"PY(

def _cell(v):
    return v if isinstance(v, str) else json.dumps(v)


def _main(paths):
    for src, dst in zip(paths[0::2], paths[1::2]):
        out = []
        with open(src, encoding="utf-8") as f:
            rows = [json.loads(line) for line in f if line.strip()]
        for i, row in enumerate(rows):
            res = transform(dict(row))
            if not isinstance(res, dict) or "model_input" not in res or "model_output" not in res:
                sys.stderr.write("row %d: transform must return a dict with model_input and model_output\n" % i)
                sys.exit(3)
            out.append({k: _cell(v) for k, v in res.items()})
        with open(dst, "w", encoding="utf-8") as f:
            for r in out:
                f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    _main(sys.argv[1:])
)PY";

std::string extract_code(std::string_view reply) {
    const auto open = reply.find("```");
    if (open == std::string_view::npos) return std::string(reply);
    auto body_start = reply.find('\n', open);
    if (body_start == std::string_view::npos) return {};
    ++body_start;
    const auto close = reply.find("```", body_start);
    return std::string(reply.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start));
}

std::string process_prompt(std::string_view instruction, const DatasetManifest& m, const Table& sample) {
    json rows = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(3, sample.rows.size()); ++i) {
        json r = json::object();
        for (std::size_t c = 0; c < m.columns.size(); ++c) r[m.columns[c]] = sample.rows[i][c];
        rows.push_back(r);
    }
    std::string p;
    p += "Write a Python function that converts one dataset row as instructed.\n\n";
    p += "Instruction:\n" + std::string(instruction) + "\n\n";
    p += "Columns: " + text::join(m.columns, ", ") + "\n";
    p += "Sample rows:\n" + dump(rows, 2) + "\n\n";
    p += "Define transform(row). row maps column names to strings. Return a dict with string values for the "
         "keys \"model_input\" and \"model_output\"; other keys are kept as extra columns. Use only the Python "
         "standard library. Reply with the code in one ```python block.\n";
    return p;
}

} // namespace

ProcessReport process_dataset(std::string_view instruction, const std::vector<std::string>& load_dirs,
                              const std::vector<std::string>& save_dirs, llm::Gateway& gateway,
                              sandbox::Workspace& workspace) {
    if (load_dirs.size() != save_dirs.size())
        fail(ErrorCode::CountMismatch, "got " + std::to_string(load_dirs.size()) + " load_dirs but " +
                                           std::to_string(save_dirs.size()) + " save_dirs");
    if (load_dirs.empty()) fail(ErrorCode::CountMismatch, "no load_dirs given");

    std::vector<DatasetManifest> manifests;
    for (const auto& d : load_dirs) manifests.push_back(read_manifest(workspace.resolve(d)));
    for (const auto& d : save_dirs) workspace.resolve(d);

    const auto first_split = manifests.front().splits.empty() ? std::string() : manifests.front().splits.front().name;
    const auto sample = first_split.empty() ? Table{manifests.front().columns, {}}
                                            : read_split(workspace.resolve(load_dirs.front()), first_split);
    llm::CompletionRequest req;
    req.prompt = process_prompt(instruction, manifests.front(), sample);
    req.session_tag = "process-dataset";
    const auto code = extract_code(gateway.complete(req).text);

    const auto harness_root = workspace.resolve(kHarnessDir);
    std::error_code ec;
    fs::create_directories(harness_root, ec);
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code e;
            fs::remove_all(p, e);
        }
    } cleanup{harness_root};

    text::write_file((harness_root / "process_dataset.py").string(),
                     "import json\nimport sys\n\n" + code + "\n" + kHarnessTail);

    std::vector<std::string> args;
    std::vector<std::tuple<std::size_t, std::string, std::size_t>> jobs; // dataset, split, rows
    for (std::size_t d = 0; d < load_dirs.size(); ++d) {
        const auto dir = workspace.resolve(load_dirs[d]);
        for (const auto& s : manifests[d].splits) {
            const auto t = read_split(dir, s.name);
            std::string jsonl;
            for (const auto& row : t.rows) {
                json r = json::object();
                for (std::size_t c = 0; c < t.columns.size(); ++c) r[t.columns[c]] = row[c];
                jsonl += dump(r) + "\n";
            }
            const auto stem = std::to_string(d) + "_" + s.name;
            text::write_file((harness_root / (stem + ".in.jsonl")).string(), jsonl);
            args.push_back(std::string(kHarnessDir) + "/" + stem + ".in.jsonl");
            args.push_back(std::string(kHarnessDir) + "/" + stem + ".out.jsonl");
            jobs.emplace_back(d, s.name, t.rows.size());
        }
    }

    const auto res = workspace.execute_script(std::string(kHarnessDir) + "/process_dataset.py", args);
    if (res.exit_code != 0) {
        auto err = res.stderr_text;
        if (err.size() > 2000) err = err.substr(err.size() - 2000);
        fail(ErrorCode::TransformFailed, "transform script failed (exit " + std::to_string(res.exit_code) + "):\n" + err);
    }

    ProcessReport report;
    std::map<std::size_t, std::vector<std::pair<std::string, std::vector<json>>>> outputs;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& [d, split, expected] = jobs[i];
        const auto out_path = workspace.resolve(args[2 * i + 1]);
        if (!fs::exists(out_path)) fail(ErrorCode::TransformFailed, "transform produced no output for split " + split);
        std::vector<json> rows;
        for (const auto& line : text::split_lines(text::read_file(out_path.string())))
            if (!text::trim(line).empty()) rows.push_back(json::parse(line));
        if (rows.size() != expected)
            fail(ErrorCode::TransformFailed, "split " + split + ": transform returned " + std::to_string(rows.size()) +
                                                 " rows for " + std::to_string(expected) + " inputs");
        outputs[d].emplace_back(split, std::move(rows));
    }

    for (std::size_t d = 0; d < load_dirs.size(); ++d) {
        std::set<std::string> extra;
        for (const auto& [split, rows] : outputs[d])
            for (const auto& r : rows)
                for (auto it = r.begin(); it != r.end(); ++it)
                    if (it.key() != "model_input" && it.key() != "model_output") extra.insert(it.key());
        std::vector<std::string> columns = {"model_input", "model_output"};
        columns.insert(columns.end(), extra.begin(), extra.end());
        std::vector<std::pair<std::string, std::vector<Row>>> splits;
        for (const auto& [split, rows] : outputs[d]) {
            std::vector<Row> out_rows;
            for (const auto& r : rows) {
                Row row;
                for (const auto& c : columns) row.push_back(r.contains(c) ? r[c].get<std::string>() : std::string());
                out_rows.push_back(std::move(row));
            }
            report.rows_per_split.emplace_back(save_dirs[d] + ":" + split, out_rows.size());
            splits.emplace_back(split, std::move(out_rows));
        }
        write_dataset(workspace.resolve(save_dirs[d]), manifests[d].name + "-processed", columns, splits);
    }
    report.message = "Processed " + std::to_string(load_dirs.size()) + " dataset(s):";
    for (const auto& [name, n] : report.rows_per_split) report.message += " " + name + "=" + std::to_string(n);
    return report;
}

// ---- training ------------------------------------------------------------------

void Hyperparameters::validate() const {
    if (epochs <= 0) fail(ErrorCode::TrainFailed, "epochs must be a positive integer, got " + std::to_string(epochs));
    if (batch_size <= 0) fail(ErrorCode::TrainFailed, "batch_size must be a positive integer");
    if (warmup_steps < 0) fail(ErrorCode::TrainFailed, "warmup_steps must not be negative");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) fail(ErrorCode::TrainFailed, "learning_rate must be positive");
    if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) fail(ErrorCode::TrainFailed, "weight_decay must not be negative");
}

LinearTrainLog train_linear(const std::vector<double>& x, const std::vector<double>& y, const Hyperparameters& hp) {
    hp.validate();
    if (x.empty() || x.size() != y.size()) fail(ErrorCode::TrainFailed, "training data is empty or misaligned");
    const std::size_t n = x.size();
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(hp.batch_size), n);
    LinearTrainLog log;
    double& w = log.model.w;
    double& b = log.model.b;
    long step = 0;
    for (long epoch = 0; epoch < hp.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            const double m = static_cast<double>(end - start);
            double gw = 0, gb = 0;
            for (std::size_t i = start; i < end; ++i) {
                const double r = w * x[i] + b - y[i];
                gw += r * x[i];
                gb += r;
            }
            gw = 2.0 * gw / m + hp.weight_decay * w;
            gb = 2.0 * gb / m;
            double lr = hp.learning_rate;
            if (hp.warmup_steps > 0 && step < hp.warmup_steps)
                lr *= static_cast<double>(step + 1) / static_cast<double>(hp.warmup_steps);
            w -= lr * gw;
            b -= lr * gb;
            ++step;
        }
        double loss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = w * x[i] + b - y[i];
            loss += r * r;
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss) || !std::isfinite(w) || !std::isfinite(b))
            fail(ErrorCode::TrainFailed, "training diverged at epoch " + std::to_string(epoch + 1) +
                                             "; lower the learning rate");
        log.epoch_loss.push_back(loss);
    }
    return log;
}

namespace {

std::vector<double> numeric_column(const Table& t, std::string_view column, ErrorCode code) {
    std::vector<double> out;
    for (const auto& v : t.column(column)) {
        const auto n = text::parse_number(v);
        if (!n) fail(code, "column '" + std::string(column) + "' holds non-numeric value '" + v + "'");
        out.push_back(*n);
    }
    return out;
}

std::string pick_column(const Table& t, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (std::find(t.columns.begin(), t.columns.end(), n) != t.columns.end()) return n;
    return t.columns.empty() ? std::string() : t.columns.front();
}

std::string train_split_name(const DatasetManifest& m) {
    if (m.split("train")) return "train";
    if (m.splits.empty()) fail(ErrorCode::TrainFailed, "dataset has no splits");
    return m.splits.front().name;
}

std::string stderr_tail(const sandbox::ExecutionResult& r) {
    auto s = r.stderr_text.empty() ? r.stdout_text : r.stderr_text;
    if (s.size() > 2000) s = s.substr(s.size() - 2000);
    return s;
}

bool is_builtin(const std::string& entry) {
    return entry == kBuiltinLinear;
}

} // namespace

TrainReport train_model(const TaskPackage& task, const std::string& model_name,
                        const std::vector<std::string>& load_dirs, const std::string& result_dir,
                        const Hyperparameters& hp, sandbox::Workspace& workspace) {
    if (task.train_entrypoint.empty()) fail(ErrorCode::MissingEntrypoint, "task.meta declares no train_entrypoint");
    hp.validate();
    if (load_dirs.empty()) fail(ErrorCode::TrainFailed, "no load_dirs given");
    const auto out_dir = workspace.resolve(result_dir);
    std::error_code ec;
    fs::create_directories(out_dir / "trained_model", ec);

    TrainReport rep;
    rep.result_dir = out_dir;
    if (is_builtin(task.train_entrypoint)) {
        std::vector<double> xs, ys;
        for (const auto& d : load_dirs) {
            const auto dir = workspace.resolve(d);
            const auto t = read_split(dir, train_split_name(read_manifest(dir)));
            const auto xcol = pick_column(t, {"model_input", "x"});
            const auto ycol = pick_column(t, {"model_output", "y"});
            const auto x = numeric_column(t, xcol, ErrorCode::TrainFailed);
            const auto y = numeric_column(t, ycol, ErrorCode::TrainFailed);
            xs.insert(xs.end(), x.begin(), x.end());
            ys.insert(ys.end(), y.begin(), y.end());
        }
        const auto log = train_linear(xs, ys, hp);
        const json model = {{"kind", "linear"}, {"w", log.model.w}, {"b", log.model.b}, {"model_name", model_name}};
        text::write_file((out_dir / "trained_model" / "model.json").string(), dump(model, 2) + "\n");
        rep.metrics = {{"train_mse", log.epoch_loss.back()}, {"epochs", hp.epochs}, {"rows", xs.size()}};
        text::write_file((out_dir / "metrics.json").string(), dump(rep.metrics, 2) + "\n");
        std::ostringstream msg;
        msg << "Model trained successfully for " << hp.epochs << " epochs on " << xs.size()
            << " rows; final training mse " << log.epoch_loss.back() << ". Artifact saved to " << result_dir
            << "/trained_model/";
        rep.message = msg.str();
        return rep;
    }

    std::vector<std::string> args = {
        "--model_name", model_name,
        "--load_dirs", text::join(load_dirs, ":"),
        "--result_dir", result_dir,
        "--epochs", std::to_string(hp.epochs),
        "--batch_size", std::to_string(hp.batch_size),
        "--warmup_steps", std::to_string(hp.warmup_steps),
        "--weight_decay", dump(hp.weight_decay),
        "--learning_rate", dump(hp.learning_rate),
    };
    const auto res = workspace.execute_script(task.train_entrypoint, args);
    if (res.exit_code != 0)
        fail(ErrorCode::TrainFailed, "training script exited with " + std::to_string(res.exit_code) + ":\n" + stderr_tail(res));
    const auto metrics_path = out_dir / "metrics.json";
    if (fs::is_regular_file(metrics_path)) {
        auto j = json::parse(text::read_file(metrics_path.string()), nullptr, false);
        if (!j.is_discarded()) rep.metrics = j;
    }
    rep.message = "Model trained successfully. Artifact saved to " + result_dir + "/trained_model/";
    return rep;
}

std::size_t execute_on_test(const TaskPackage& task, const std::string& result_dir,
                            const std::vector<std::string>& load_dirs, const std::string& save_path, long batch_size,
                            const std::string& input_column, sandbox::Workspace& workspace) {
    const auto artifact = workspace.resolve(result_dir) / "trained_model";
    if (!fs::is_directory(artifact) || fs::is_empty(artifact))
        fail(ErrorCode::ArtifactMissing, "no trained model found under " + result_dir + "/trained_model/");
    if (batch_size <= 0) fail(ErrorCode::ExecFailed, "batch_size must be positive");
    const auto out_path = workspace.resolve(save_path);

    const auto entry = task.predict_entrypoint.empty() && is_builtin(task.train_entrypoint) ? std::string(kBuiltinLinear)
                                                                                            : task.predict_entrypoint;
    if (entry.empty()) fail(ErrorCode::MissingEntrypoint, "task.meta declares no predict_entrypoint");

    if (is_builtin(entry)) {
        const auto model_path = artifact / "model.json";
        if (!fs::is_regular_file(model_path)) fail(ErrorCode::ArtifactMissing, "model.json missing in " + result_dir);
        const auto model = json::parse(text::read_file(model_path.string()), nullptr, false);
        if (model.is_discarded() || !model.contains("w") || !model.contains("b"))
            fail(ErrorCode::ArtifactMissing, "model.json in " + result_dir + " is not a linear model");
        const double w = model["w"].get<double>(), b = model["b"].get<double>();
        json preds = json::array();
        for (const auto& d : load_dirs) {
            Table t;
            try {
                t = read_split(workspace.resolve(d), "test");
            } catch (const Error& e) {
                fail(ErrorCode::ExecFailed, e.what());
            }
            const auto col = input_column.empty() ? pick_column(t, {"model_input", "x"}) : input_column;
            if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end())
                fail(ErrorCode::ExecFailed, "test split has no column '" + col + "'");
            for (double x : numeric_column(t, col, ErrorCode::ExecFailed)) preds.push_back({{"prediction", w * x + b}});
        }
        std::error_code ec;
        fs::create_directories(out_path.parent_path(), ec);
        text::write_file(out_path.string(), dump(preds, 2) + "\n");
        return preds.size();
    }

    const std::vector<std::string> args = {
        "--result_dir", result_dir, "--load_dirs", text::join(load_dirs, ":"), "--save_path", save_path,
        "--batch_size", std::to_string(batch_size), "--input_column", input_column,
    };
    const auto res = workspace.execute_script(entry, args);
    if (res.exit_code != 0)
        fail(ErrorCode::ExecFailed, "prediction script exited with " + std::to_string(res.exit_code) + ":\n" + stderr_tail(res));
    if (!fs::is_regular_file(out_path)) fail(ErrorCode::ExecFailed, "prediction script wrote no " + save_path);
    return read_predictions(out_path).size();
}

// ---- evaluation ----------------------------------------------------------------

namespace {

std::string canonical_metric(std::string_view metric) {
    const auto m = text::to_lower(text::trim(metric));
    if (m == "accuracy" || m == "acc") return "accuracy";
    if (m == "mse" || m == "mean_squared_error" || m == "mean squared error") return "mse";
    if (m == "rmse" || m == "root_mean_squared_error" || m == "root mean squared error") return "rmse";
    if (m == "pearson" || m == "pearsonr" || m == "pearson_correlation") return "pearson";
    return {};
}

std::vector<double> to_numbers(const std::vector<std::string>& v, const char* what) {
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& s : v) {
        const auto n = text::parse_number(s);
        if (!n) fail(ErrorCode::InvalidArgument, std::string(what) + " value '" + s + "' is not numeric");
        out.push_back(*n);
    }
    return out;
}

} // namespace

bool is_known_metric(std::string_view metric) {
    return !canonical_metric(metric).empty();
}

double compute_metric(std::string_view metric, const std::vector<std::string>& references,
                      const std::vector<std::string>& predictions) {
    const auto m = canonical_metric(metric);
    if (m.empty()) fail(ErrorCode::UnknownMetric, "unsupported metric '" + std::string(metric) + "'");
    if (references.size() != predictions.size())
        fail(ErrorCode::RowMismatch, std::to_string(predictions.size()) + " predictions for " +
                                         std::to_string(references.size()) + " references");
    if (references.empty()) fail(ErrorCode::InvalidArgument, "nothing to evaluate");
    const double n = static_cast<double>(references.size());
    if (m == "accuracy") {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < references.size(); ++i) {
            const auto a = text::parse_number(references[i]);
            const auto b = text::parse_number(predictions[i]);
            if (a && b) hits += std::fabs(*a - *b) <= 1e-9;
            else hits += text::trim(references[i]) == text::trim(predictions[i]);
        }
        return static_cast<double>(hits) / n;
    }
    const auto r = to_numbers(references, "reference");
    const auto p = to_numbers(predictions, "prediction");
    if (m == "mse" || m == "rmse") {
        double s = 0;
        for (std::size_t i = 0; i < r.size(); ++i) s += (r[i] - p[i]) * (r[i] - p[i]);
        s /= n;
        return m == "mse" ? s : std::sqrt(s);
    }
    double mr = 0, mp = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        mr += r[i];
        mp += p[i];
    }
    mr /= n;
    mp /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        sxy += (r[i] - mr) * (p[i] - mp);
        sxx += (r[i] - mr) * (r[i] - mr);
        syy += (p[i] - mp) * (p[i] - mp);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::string> read_predictions(const fs::path& path) {
    if (!fs::is_regular_file(path)) fail(ErrorCode::FileMissing, "predictions file not found: " + path.string());
    auto j = json::parse(text::read_file(path.string()), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaError, "predictions file is not JSON: " + path.string());
    if (j.is_object() && j.contains("predictions")) j = j["predictions"];
    if (!j.is_array()) fail(ErrorCode::SchemaError, "predictions file must hold an array");
    std::vector<std::string> out;
    for (const auto& r : j) {
        const auto& v = r.is_object() && r.contains("prediction") ? r["prediction"] : r;
        out.push_back(v.is_string() ? v.get<std::string>() : dump(v));
    }
    return out;
}

std::map<std::string, double> evaluate_predictions(const std::vector<std::string>& load_dirs,
                                                   const std::string& save_path, const std::string& output_column,
                                                   const std::vector<std::string>& metrics,
                                                   sandbox::Workspace& workspace) {
    std::vector<std::string> refs;
    for (const auto& d : load_dirs) {
        const auto t = read_split(workspace.resolve(d), "test");
        const auto col = output_column.empty() ? pick_column(t, {"model_output", "y"}) : output_column;
        const auto v = t.column(col);
        refs.insert(refs.end(), v.begin(), v.end());
    }
    const auto preds = read_predictions(workspace.resolve(save_path));
    std::vector<std::string> wanted = metrics;
    if (wanted.empty()) {
        const bool numeric = std::all_of(refs.begin(), refs.end(), [](const std::string& s) { return text::parse_number(s).has_value(); });
        wanted = numeric ? std::vector<std::string>{"mse", "rmse", "pearson"} : std::vector<std::string>{"accuracy"};
    }
    std::map<std::string, double> out;
    for (const auto& m : wanted) out[m] = compute_metric(m, refs, preds);
    return out;
}

} // namespace autoresearch::ml
