#include "autoresearch/corpus.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"
#include "http_util.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <set>
#include <thread>

namespace autoresearch::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Section { Title, Abstract, Introduction, RelatedWork, Other };

struct HeaderMatch {
    Section section = Section::Other;
    std::string name;
    std::string inline_content;
    bool markdown = false;
};

std::string_view skip_spaces(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::string_view strip_emphasis(std::string_view s) {
    while (!s.empty() && (s.front() == '*' || s.front() == '_')) s.remove_prefix(1);
    return skip_spaces(s);
}

// "2.1 Related Work" -> "Related Work"
std::string_view strip_section_number(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
    if (i > 0 && i < s.size() && s[i] == ' ') return skip_spaces(s.substr(i));
    return s;
}

std::optional<HeaderMatch> match_paper_header(std::string_view line) {
    auto s = skip_spaces(line);
    HeaderMatch m;
    while (!s.empty() && s.front() == '#') {
        s.remove_prefix(1);
        m.markdown = true;
    }
    s = strip_section_number(strip_emphasis(skip_spaces(s)));

    static const std::pair<std::string_view, Section> known[] = {
        {"related works", Section::RelatedWork},
        {"related work", Section::RelatedWork},
        {"introduction", Section::Introduction},
        {"abstract", Section::Abstract},
        {"title", Section::Title},
    };
    for (const auto& [name, section] : known) {
        if (!text::starts_with_ci(s, name)) continue;
        auto rest = s.substr(name.size());
        while (!rest.empty() && (rest.front() == '*' || rest.front() == '_')) rest.remove_prefix(1);
        rest = skip_spaces(rest);
        const auto trimmed = text::trim(rest);
        if (trimmed.empty()) {
            m.section = section;
            m.name = std::string(name);
            return m;
        }
        if (rest.front() == ':') {
            m.section = section;
            m.name = std::string(name);
            m.inline_content = text::trim(rest.substr(1));
            return m;
        }
    }
    if (m.markdown) {
        auto name = text::trim(s);
        while (!name.empty() && (name.back() == '*' || name.back() == ':')) name.pop_back();
        if (name.empty()) return std::nullopt;
        m.section = Section::Other;
        m.name = text::trim(name);
        return m;
    }
    return std::nullopt;
}

void append_line(std::string& body, std::string_view line) {
    body.append(line);
    body.push_back('\n');
}

} // namespace

PaperParse parse_paper(std::string_view document, std::string source_id) {
    PaperParse out;
    auto& paper = out.paper;
    paper.source_id = std::move(source_id);

    std::optional<Section> current;
    std::string other_name;
    std::map<Section, std::string> bodies;
    std::vector<std::pair<std::string, std::string>> extras;
    bool title_done = false;
    bool saw[4] = {false, false, false, false};

    for (const auto& line : text::split_lines(document)) {
        const bool blank = text::trim(line).empty();
        if (auto m = match_paper_header(line)) {
            if (m->section == Section::Title) {
                current = Section::Title;
                if (!m->inline_content.empty()) {
                    paper.title = m->inline_content;
                    title_done = true;
                    current.reset();
                }
                continue;
            }
            if (!title_done && paper.title.empty() && m->markdown && m->section == Section::Other) {
                paper.title = m->name;
                title_done = true;
                current.reset();
                continue;
            }
            title_done = title_done || !paper.title.empty();
            current = m->section;
            if (m->section == Section::Other) {
                other_name = m->name;
                extras.emplace_back(other_name, std::string());
                if (!m->inline_content.empty()) append_line(extras.back().second, m->inline_content);
            } else {
                saw[static_cast<int>(m->section)] = true;
                if (!m->inline_content.empty()) append_line(bodies[m->section], m->inline_content);
            }
            continue;
        }

        if (!current) {
            if (!title_done && paper.title.empty() && !blank) {
                paper.title = text::trim(line);
                title_done = true;
            }
            continue;
        }
        switch (*current) {
        case Section::Title:
            if (paper.title.empty()) {
                if (!blank) paper.title = text::trim(line);
            } else if (blank) {
                title_done = true;
                current.reset();
            } else {
                paper.title += " " + text::trim(line);
            }
            break;
        case Section::Other:
            append_line(extras.back().second, line);
            break;
        default:
            append_line(bodies[*current], line);
            break;
        }
    }

    paper.title = text::trim(paper.title);
    if (paper.title.empty()) fail(ErrorCode::MissingTitle, "document has no title");

    paper.abstract_text = text::trim(bodies[Section::Abstract]);
    paper.introduction = text::trim(bodies[Section::Introduction]);
    paper.related_work = text::trim(bodies[Section::RelatedWork]);
    for (auto& [name, body] : extras) paper.extra_sections.emplace_back(name, text::trim(body));

    if (paper.abstract_text.empty())
        out.warnings.push_back(saw[1] ? "section 'abstract' is empty" : "missing section 'abstract'");
    if (paper.introduction.empty())
        out.warnings.push_back(saw[2] ? "section 'introduction' is empty" : "missing section 'introduction'");
    if (paper.related_work.empty())
        out.warnings.push_back(saw[3] ? "section 'related work' is empty" : "missing section 'related work'");
    return out;
}

PaperParse load_paper_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::FileMissing, "paper directory not found: " + dir);
    PaperParse out;
    auto& paper = out.paper;
    paper.source_id = fs::path(dir).lexically_normal().filename().string();
    if (paper.source_id.empty()) paper.source_id = fs::path(dir).parent_path().filename().string();

    auto read_opt = [&](const char* name) -> std::optional<std::string> {
        const auto p = fs::path(dir) / name;
        if (!fs::exists(p)) return std::nullopt;
        return text::trim(text::read_file(p.string()));
    };

    if (auto t = read_opt("title.txt")) paper.title = *t;
    // Multi-line titles collapse to one line.
    paper.title = text::trim(text::join(text::split_lines(paper.title), " "));
    if (paper.title.empty()) fail(ErrorCode::MissingTitle, "title.txt missing or empty in " + dir);

    struct Slot {
        const char* file;
        const char* label;
        std::string* field;
    } slots[] = {
        {"abstract.txt", "abstract", &paper.abstract_text},
        {"introduction.txt", "introduction", &paper.introduction},
        {"related_work.txt", "related work", &paper.related_work},
    };
    for (auto& slot : slots) {
        if (auto v = read_opt(slot.file)) *slot.field = *v;
        if (slot.field->empty()) out.warnings.push_back(std::string("missing section '") + slot.label + "'");
    }

    std::vector<fs::path> extra_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const auto name = entry.path().filename().string();
        if (name == "title.txt" || name == "abstract.txt" || name == "introduction.txt" ||
            name == "related_work.txt")
            continue;
        extra_files.push_back(entry.path());
    }
    std::sort(extra_files.begin(), extra_files.end());
    for (const auto& p : extra_files)
        paper.extra_sections.emplace_back(p.stem().string(), text::trim(text::read_file(p.string())));
    return out;
}

std::string extraction_prompt(const ResearchPaper& paper) {
    std::string p;
    p += "You are helping a machine learning researcher analyse a research article before proposing new work.\n"
         "Read the article below and identify what it sets out to do, what remains "
         "unsolved, and the key entities it deals with.\n\n";
    p += "Title:\n" + paper.title + "\n\n";
    p += "Abstract:\n" + paper.abstract_text + "\n\n";
    p += "Introduction:\n" + paper.introduction + "\n\n";
    p += "Related Work:\n" + paper.related_work + "\n\n";
    p += "Reply with exactly three headed sections and nothing else:\n"
         "Research Tasks:\n- one research task per bullet\n"
         "Research Gaps:\n- one research gap per bullet\n"
         "Keywords:\ncomma-separated keywords\n";
    return p;
}

namespace {

enum class FrameSection { Tasks, Gaps, Keywords };

std::optional<std::pair<FrameSection, std::string>> match_frame_header(std::string_view line) {
    auto s = skip_spaces(line);
    while (!s.empty() && (s.front() == '#' || s.front() == '-' || s.front() == '*' || s.front() == '_' ||
                          s.front() == ' '))
        s.remove_prefix(1);
    static const std::pair<std::string_view, FrameSection> names[] = {
        {"research tasks", FrameSection::Tasks},
        {"research gaps", FrameSection::Gaps},
        {"keywords", FrameSection::Keywords},
    };
    for (const auto& [name, section] : names) {
        if (!text::starts_with_ci(s, name)) continue;
        auto rest = skip_spaces(s.substr(name.size()));
        if (!rest.empty() && rest.front() == '(') {
            const auto close = rest.find(')');
            if (close == std::string_view::npos) return std::nullopt;
            rest = skip_spaces(rest.substr(close + 1));
        }
        while (!rest.empty() && (rest.front() == '*' || rest.front() == '_')) rest.remove_prefix(1);
        rest = skip_spaces(rest);
        if (text::trim(rest).empty()) return std::make_pair(section, std::string());
        if (rest.front() == ':') {
            auto inline_content = rest.substr(1);
            while (!inline_content.empty() && (inline_content.front() == '*' || inline_content.front() == '_'))
                inline_content.remove_prefix(1);
            return std::make_pair(section, text::trim(inline_content));
        }
        return std::nullopt;
    }
    return std::nullopt;
}

// Returns the line with a leading bullet or "N." / "N)" marker removed, or
// nullopt when the line carries no marker.
std::optional<std::string> strip_bullet(std::string_view line) {
    auto s = skip_spaces(line);
    if (s.empty()) return std::nullopt;
    if ((s.front() == '-' || s.front() == '*' || s.front() == '+') && s.size() > 1 && (s[1] == ' ' || s[1] == '\t'))
        return text::trim(s.substr(2));
    if (s.rfind("\xE2\x80\xA2", 0) == 0) return text::trim(s.substr(3)); // U+2022 bullet
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')') && (s[i + 1] == ' ' || s[i + 1] == '\t'))
        return text::trim(s.substr(i + 2));
    return std::nullopt;
}

std::vector<std::string> dedupe_ci(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : items) {
        auto t = text::trim(item);
        if (t.empty()) continue;
        if (seen.insert(text::normalize_title(t)).second) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> parse_list_items(const std::vector<std::string>& lines) {
    bool any_bullet = false;
    for (const auto& l : lines)
        if (strip_bullet(l)) any_bullet = true;

    std::vector<std::string> items;
    if (any_bullet) {
        for (const auto& l : lines) {
            if (auto b = strip_bullet(l)) {
                items.push_back(*b);
            } else if (!text::trim(l).empty() && !items.empty()) {
                items.back() += " " + text::trim(l);
            } else if (!text::trim(l).empty()) {
                items.push_back(text::trim(l));
            }
        }
        return items;
    }
    // No markers: one item per paragraph.
    std::string current;
    for (const auto& l : lines) {
        const auto t = text::trim(l);
        if (t.empty()) {
            if (!current.empty()) items.push_back(std::move(current));
            current.clear();
        } else {
            if (!current.empty()) current += ' ';
            current += t;
        }
    }
    if (!current.empty()) items.push_back(std::move(current));
    return items;
}

std::vector<std::string> parse_keywords(const std::vector<std::string>& lines) {
    std::vector<std::string> out;
    for (const auto& l : lines) {
        std::string line = l;
        if (auto b = strip_bullet(line)) line = *b;
        std::string cur;
        auto flush = [&] {
            auto t = text::trim(cur);
            while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.erase(t.begin());
            while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '.')) t.pop_back();
            if (!t.empty()) out.push_back(text::trim(t));
            cur.clear();
        };
        for (char c : line) {
            if (c == ',' || c == ';') flush();
            else cur.push_back(c);
        }
        flush();
    }
    return out;
}

} // namespace

ProblemFrame parse_problem_frame(std::string_view response) {
    std::map<FrameSection, std::vector<std::string>> bodies;
    std::optional<FrameSection> current;
    for (const auto& line : text::split_lines(response)) {
        if (auto h = match_frame_header(line)) {
            current = h->first;
            auto& body = bodies[h->first];
            if (!h->second.empty()) body.push_back(h->second);
            continue;
        }
        if (current) bodies[*current].push_back(line);
    }
    const std::pair<FrameSection, const char*> required[] = {
        {FrameSection::Tasks, "Research Tasks"},
        {FrameSection::Gaps, "Research Gaps"},
        {FrameSection::Keywords, "Keywords"},
    };
    for (const auto& [section, label] : required)
        if (!bodies.count(section)) fail(ErrorCode::ParseError, std::string("missing header '") + label + "'");

    ProblemFrame frame;
    frame.tasks = dedupe_ci(parse_list_items(bodies[FrameSection::Tasks]));
    frame.gaps = dedupe_ci(parse_list_items(bodies[FrameSection::Gaps]));
    frame.keywords = dedupe_ci(parse_keywords(bodies[FrameSection::Keywords]));
    if (frame.keywords.empty()) fail(ErrorCode::EmptyExtraction, "no keywords extracted");
    return frame;
}

ProblemFrame extract_problem(const ResearchPaper& paper, llm::Gateway& gateway) {
    llm::CompletionRequest req;
    req.prompt = extraction_prompt(paper);
    req.session_tag = "extract";
    auto reply = gateway.complete(req);
    try {
        return parse_problem_frame(reply.text);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ParseError) throw;
        req.prompt += "\nYour previous reply could not be parsed (" + std::string(e.what()) +
                      "). Reply again using exactly the three headers Research Tasks:, Research Gaps:, Keywords:.\n";
        reply = gateway.complete(req);
        return parse_problem_frame(reply.text);
    }
}

PromptContext build_prompt_context(ResearchPaper paper, ProblemFrame frame) {
    return PromptContext{std::move(paper), std::move(frame)};
}

std::string PromptContext::render(std::size_t budget) const {
    auto bullets = [](const std::vector<std::string>& items) {
        std::string s;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) s += '\n';
            s += "- " + items[i];
        }
        return s;
    };
    const std::vector<std::pair<std::string, std::string>> sections = {
        {"Title:\n", paper.title},
        {"Abstract:\n", paper.abstract_text},
        {"Introduction:\n", paper.introduction},
        {"Related Work:\n", paper.related_work},
        {"Research Tasks (t):\n", bullets(frame.tasks)},
        {"Research Gaps (g):\n", bullets(frame.gaps)},
        {"Keywords (k):\n", text::join(frame.keywords, ", ")},
    };
    constexpr std::string_view sep = "\n\n";

    auto assemble = [&](const std::vector<std::size_t>* caps) {
        std::string out;
        for (std::size_t i = 0; i < sections.size(); ++i) {
            if (i) out += sep;
            out += sections[i].first;
            const auto& body = sections[i].second;
            if (caps) out.append(body, 0, text::utf8_safe_prefix(body, (*caps)[i]));
            else out += body;
        }
        return out;
    };

    std::string full = assemble(nullptr);
    if (full.size() <= budget) return full;

    const std::string marker(kTruncationMarker);
    if (budget <= marker.size()) return marker.substr(0, budget);

    std::size_t skeleton = 0;
    for (std::size_t i = 0; i < sections.size(); ++i) skeleton += sections[i].first.size() + (i ? sep.size() : 0);

    if (skeleton + marker.size() > budget) {
        // Not even the heads fit: hard cut.
        full.resize(text::utf8_safe_prefix(full, budget - marker.size()));
        return full + marker;
    }

    // Water-fill the remaining bytes across section bodies so short sections
    // survive intact and long ones share the rest equally.
    std::size_t avail = budget - marker.size() - skeleton;
    std::vector<std::size_t> caps(sections.size(), 0);
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < sections.size(); ++i)
        if (!sections[i].second.empty()) open.push_back(i);
    while (avail > 0 && !open.empty()) {
        const std::size_t share = std::max<std::size_t>(1, avail / open.size());
        std::vector<std::size_t> still_open;
        for (auto i : open) {
            if (avail == 0) break;
            const std::size_t want = sections[i].second.size() - caps[i];
            const std::size_t give = std::min({want, share, avail});
            caps[i] += give;
            avail -= give;
            if (caps[i] < sections[i].second.size()) still_open.push_back(i);
        }
        open = std::move(still_open);
    }
    return assemble(&caps) + marker;
}

std::vector<LiteratureRecord> parse_literature_records(std::string_view body) {
    std::vector<json> raw;
    const auto trimmed = text::trim(body);
    if (trimmed.empty()) return {};
    try {
        json whole = json::parse(trimmed, nullptr, false);
        if (!whole.is_discarded()) {
            if (whole.is_array()) {
                for (auto& r : whole) raw.push_back(r);
            } else if (whole.is_object() && whole.contains("data")) {
                if (!whole["data"].is_array()) fail(ErrorCode::MalformedResponse, "'data' is not an array");
                for (auto& r : whole["data"]) raw.push_back(r);
            } else {
                raw.push_back(whole);
            }
        } else {
            for (const auto& line : text::split_lines(trimmed)) {
                if (text::trim(line).empty()) continue;
                raw.push_back(json::parse(line));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedResponse, std::string("literature records: ") + e.what());
    }

    std::vector<LiteratureRecord> out;
    for (const auto& r : raw) {
        if (!r.is_object()) fail(ErrorCode::MalformedResponse, "literature record is not an object");
        auto str = [&](const char* key) -> std::string {
            if (!r.contains(key) || r[key].is_null()) return {};
            if (!r[key].is_string()) fail(ErrorCode::MalformedResponse, std::string("field '") + key + "' is not text");
            return r[key].get<std::string>();
        };
        LiteratureRecord rec;
        rec.title = text::trim(str("title"));
        if (rec.title.empty()) continue;
        rec.abstract_text = str("abstract");
        rec.id = r.contains("id") ? str("id") : str("paperId");
        if (r.contains("year") && !r["year"].is_null()) {
            if (!r["year"].is_number_integer()) fail(ErrorCode::MalformedResponse, "field 'year' is not an integer");
            rec.year = r["year"].get<int>();
        }
        if (r.contains("score") && !r["score"].is_null()) {
            if (!r["score"].is_number()) fail(ErrorCode::MalformedResponse, "field 'score' is not a number");
            rec.score = r["score"].get<double>();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

StubLiteratureProvider::StubLiteratureProvider(std::vector<LiteratureRecord> records)
    : records_(std::move(records)) {}

StubLiteratureProvider StubLiteratureProvider::from_file(const std::string& path) {
    return StubLiteratureProvider(parse_literature_records(text::read_file(path)));
}

std::vector<LiteratureRecord> StubLiteratureProvider::search(const LiteratureQuery& query) {
    std::vector<LiteratureRecord> out(records_.begin(),
                                      records_.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(query.limit, records_.size())));
    return out;
}

HttpLiteratureProvider::HttpLiteratureProvider(HttpLiteratureConfig config)
    : config_(std::move(config)), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

std::vector<LiteratureRecord> HttpLiteratureProvider::search(const LiteratureQuery& query) {
    const auto base = detail::split_base_url(config_.base_url);
    auto client = detail::make_client(base, config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key_env.empty())
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) headers.emplace("x-api-key", key);
    const httplib::Params params = {
        {"query", query.query},
        {"limit", std::to_string(query.limit)},
        {"fields", "title,abstract,year"},
    };

    std::string last_error;
    auto backoff = config_.initial_backoff;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            sleeper_(backoff);
            backoff *= 2;
        }
        auto res = client->Get(base.path_prefix + config_.search_path, params, headers);
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (detail::is_transient_status(res->status)) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            fail(ErrorCode::ProviderUnavailable, "literature provider returned HTTP " + std::to_string(res->status));
        return parse_literature_records(res->body);
    }
    fail(ErrorCode::ProviderUnavailable, "literature provider unavailable: " + last_error);
}

std::size_t keyword_overlap(const std::vector<std::string>& keywords, std::string_view text_in) {
    const auto tokens = text::alnum_tokens(text_in);
    std::size_t count = 0;
    for (const auto& kw : keywords) {
        const auto kt = text::alnum_tokens(kw);
        if (kt.empty() || kt.size() > tokens.size()) continue;
        for (std::size_t i = 0; i + kt.size() <= tokens.size(); ++i) {
            if (std::equal(kt.begin(), kt.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                ++count;
                break;
            }
        }
    }
    return count;
}

std::string literature_query(const PromptContext& context) {
    std::string q = context.frame.keywords.empty() ? context.paper.title : text::join(context.frame.keywords, " ");
    if (q.size() > 300) q.resize(text::utf8_safe_prefix(q, 300));
    return q;
}

std::vector<RelatedWork> search_recent_works(const PromptContext& context, std::size_t limit,
                                             LiteratureProvider& provider) {
    if (limit == 0) return {};
    LiteratureQuery query{literature_query(context), std::max<std::size_t>(limit * 4, 50)};
    std::vector<RelatedWork> candidates;
    for (auto& rec : provider.search(query)) {
        if (text::trim(rec.title).empty()) continue;
        RelatedWork w;
        w.title = rec.title;
        w.abstract_text = rec.abstract_text;
        w.year = rec.year;
        w.source_id = rec.id;
        w.relevance = rec.score ? std::max(0.0, *rec.score)
                                : static_cast<double>(keyword_overlap(context.frame.keywords,
                                                                      rec.title + " " + rec.abstract_text));
        candidates.push_back(std::move(w));
    }
    auto ranked = dedupe_and_rank(std::move(candidates));
    if (ranked.size() > limit) ranked.resize(limit);
    return ranked;
}

std::vector<RelatedWork> dedupe_and_rank(std::vector<RelatedWork> candidates) {
    auto better = [](const RelatedWork& a, const RelatedWork& b) {
        if (a.relevance != b.relevance) return a.relevance > b.relevance;
        if (a.year != b.year) return a.year > b.year;
        return a.title < b.title;
    };
    std::map<std::string, std::size_t> index;
    std::vector<RelatedWork> unique;
    for (auto& c : candidates) {
        const auto key = text::normalize_title(c.title);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, unique.size());
            unique.push_back(std::move(c));
        } else if (better(c, unique[it->second])) {
            unique[it->second] = std::move(c);
        }
    }
    std::stable_sort(unique.begin(), unique.end(), better);
    return unique;
}

json to_json(const ResearchPaper& paper) {
    json extras = json::array();
    for (const auto& [name, body] : paper.extra_sections) extras.push_back({{"name", name}, {"text", body}});
    return {
        {"title", paper.title},
        {"abstract", paper.abstract_text},
        {"introduction", paper.introduction},
        {"related_work", paper.related_work},
        {"extra_sections", extras},
        {"source_id", paper.source_id},
    };
}

json to_json(const ProblemFrame& frame) {
    return {{"tasks", frame.tasks}, {"gaps", frame.gaps}, {"keywords", frame.keywords}};
}

json to_json(const RelatedWork& work) {
    return {
        {"title", work.title},
        {"abstract", work.abstract_text},
        {"year", work.year},
        {"id", work.source_id},
        {"relevance", work.relevance},
    };
}

namespace {
const json& require(const json& j, const char* key, const char* where) {
    if (!j.is_object() || !j.contains(key))
        fail(ErrorCode::SchemaError, std::string(where) + ": missing field '" + key + "'");
    return j.at(key);
}
} // namespace

ResearchPaper paper_from_json(const json& j) {
    try {
        ResearchPaper p;
        p.title = require(j, "title", "paper").get<std::string>();
        p.abstract_text = require(j, "abstract", "paper").get<std::string>();
        p.introduction = require(j, "introduction", "paper").get<std::string>();
        p.related_work = require(j, "related_work", "paper").get<std::string>();
        if (j.contains("extra_sections"))
            for (const auto& e : j["extra_sections"])
                p.extra_sections.emplace_back(e.at("name").get<std::string>(), e.at("text").get<std::string>());
        p.source_id = j.value("source_id", "");
        if (p.title.empty()) fail(ErrorCode::MissingTitle, "paper: empty title");
        return p;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("paper: ") + e.what());
    }
}

ProblemFrame frame_from_json(const json& j) {
    try {
        ProblemFrame f;
        f.tasks = require(j, "tasks", "frame").get<std::vector<std::string>>();
        f.gaps = require(j, "gaps", "frame").get<std::vector<std::string>>();
        f.keywords = require(j, "keywords", "frame").get<std::vector<std::string>>();
        return f;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("frame: ") + e.what());
    }
}

RelatedWork related_from_json(const json& j) {
    try {
        RelatedWork w;
        w.title = require(j, "title", "related work").get<std::string>();
        w.abstract_text = j.value("abstract", "");
        w.year = j.value("year", 0);
        w.source_id = j.value("id", "");
        w.relevance = j.value("relevance", 0.0);
        return w;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("related work: ") + e.what());
    }
}

} // namespace autoresearch::corpus
