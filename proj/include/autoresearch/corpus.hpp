#pragma once
#include "autoresearch/gateway.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace autoresearch::corpus {

// The selected contents of the source paper. Only the four named sections
// feed the prompt context; anything else lands in extra_sections.
struct ResearchPaper {
    std::string title;
    std::string abstract_text;
    std::string introduction;
    std::string related_work;
    std::vector<std::pair<std::string, std::string>> extra_sections;
    std::string source_id;

    bool operator==(const ResearchPaper&) const = default;
};

struct PaperParse {
    ResearchPaper paper;
    std::vector<std::string> warnings;
};

// Sectioned plain text: a title (first line, "Title:" header, or a leading
// markdown heading) followed by headed sections. Throws MissingTitle.
PaperParse parse_paper(std::string_view document, std::string source_id = {});

// Fixture layout: title.txt, abstract.txt, introduction.txt, related_work.txt.
// Any other *.txt becomes an extra section named after the file stem.
PaperParse load_paper_dir(const std::string& dir);

struct ProblemFrame {
    std::vector<std::string> tasks;
    std::vector<std::string> gaps;
    std::vector<std::string> keywords;

    bool operator==(const ProblemFrame&) const = default;
};

inline constexpr std::string_view kExtractionTemplateId = "problem-extraction/v1";

std::string extraction_prompt(const ResearchPaper& paper);

// Parses the headed-sections reply ("Research Tasks", "Research Gaps",
// "Keywords"). Throws ParseError when a header is missing and
// EmptyExtraction when no keyword survives.
ProblemFrame parse_problem_frame(std::string_view response);

// One re-ask on ParseError, then the error propagates.
ProblemFrame extract_problem(const ResearchPaper& paper, llm::Gateway& gateway);

inline constexpr std::size_t kDefaultContextBudget = 24000;
inline constexpr std::string_view kTruncationMarker = "\n[...truncated]";

struct PromptContext {
    ResearchPaper paper;
    ProblemFrame frame;

    // Deterministic rendering in the order title, abstract, introduction,
    // related work, tasks, gaps, keywords. Over budget, every section head is
    // kept, section tails are trimmed, and the result ends in
    // kTruncationMarker with size == budget (ASCII input).
    std::string render(std::size_t budget = kDefaultContextBudget) const;

    bool operator==(const PromptContext&) const = default;
};

PromptContext build_prompt_context(ResearchPaper paper, ProblemFrame frame);

struct RelatedWork {
    std::string title;
    std::string abstract_text;
    int year = 0;
    std::string source_id;
    double relevance = 0.0;

    bool operator==(const RelatedWork&) const = default;
};

// Wire record of the literature provider contract.
struct LiteratureRecord {
    std::string title;
    std::string abstract_text;
    int year = 0;
    std::string id;
    std::optional<double> score;
};

struct LiteratureQuery {
    std::string query;
    std::size_t limit = 10;
};

class LiteratureProvider {
public:
    virtual ~LiteratureProvider() = default;
    virtual std::vector<LiteratureRecord> search(const LiteratureQuery& query) = 0;
};

// Accepts JSON lines of {title, abstract, year, id, score}, a JSON array of
// those, or a {"data": [...]} envelope using paperId for the id.
// Throws MalformedResponse.
std::vector<LiteratureRecord> parse_literature_records(std::string_view body);

// Reads the same record format from a local file and returns records in file
// order, capped at the requested limit.
class StubLiteratureProvider : public LiteratureProvider {
public:
    explicit StubLiteratureProvider(std::vector<LiteratureRecord> records);
    static StubLiteratureProvider from_file(const std::string& path);

    std::vector<LiteratureRecord> search(const LiteratureQuery& query) override;

private:
    std::vector<LiteratureRecord> records_;
};

struct HttpLiteratureConfig {
    std::string base_url = "https://api.semanticscholar.org";
    std::string search_path = "/graph/v1/paper/search";
    std::string api_key_env = "S2_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{30};
};

// GET {search_path}?query=..&limit=..&fields=title,abstract,year
class HttpLiteratureProvider : public LiteratureProvider {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpLiteratureProvider(HttpLiteratureConfig config);
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

    std::vector<LiteratureRecord> search(const LiteratureQuery& query) override;

private:
    HttpLiteratureConfig config_;
    Sleeper sleeper_;
};

// Number of keywords whose token sequence occurs contiguously in text's
// lowercased alphanumeric tokens.
std::size_t keyword_overlap(const std::vector<std::string>& keywords, std::string_view text);

std::string literature_query(const PromptContext& context);

// At most `limit` works ranked by relevance (provider score when supplied,
// keyword overlap otherwise).
std::vector<RelatedWork> search_recent_works(const PromptContext& context, std::size_t limit,
                                             LiteratureProvider& provider);

// Collapses duplicates by normalized title, then orders by relevance desc,
// year desc, title asc. Idempotent.
std::vector<RelatedWork> dedupe_and_rank(std::vector<RelatedWork> candidates);

nlohmann::json to_json(const ResearchPaper& paper);
nlohmann::json to_json(const ProblemFrame& frame);
nlohmann::json to_json(const RelatedWork& work);
ResearchPaper paper_from_json(const nlohmann::json& j);
ProblemFrame frame_from_json(const nlohmann::json& j);
RelatedWork related_from_json(const nlohmann::json& j);

} // namespace autoresearch::corpus
