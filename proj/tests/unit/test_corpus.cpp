#include "autoresearch/corpus.hpp"
#include "autoresearch/text.hpp"
#include "support.hpp"

#include <httplib.h>

#include <thread>

using namespace autoresearch;
using namespace autoresearch::corpus;
using namespace testsupport;

namespace {

std::string paper_dir() { return (data_dir() / "papers" / "student_feedback").string(); }

// First reply of the bundled idea session is the extraction answer.
std::string extraction_reply() {
    auto s = llm::ScriptedSession::load((data_dir() / "sessions" / "idea_student_feedback.jsonl").string());
    return s->entries().at(0).reply;
}

PromptContext fixture_context() {
    auto paper = load_paper_dir(paper_dir()).paper;
    return build_prompt_context(paper, parse_problem_frame(extraction_reply()));
}

} // namespace

TEST(ParsePaper, FixtureDirectory) {
    const auto parsed = load_paper_dir(paper_dir());
    EXPECT_EQ(parsed.paper.title, "Dataset and Baseline for Automatic Student Feedback Analysis");
    EXPECT_EQ(parsed.paper.abstract_text.rfind("This paper presents a student feedback corpus", 0), 0u);
    EXPECT_FALSE(parsed.paper.introduction.empty());
    EXPECT_FALSE(parsed.paper.related_work.empty());
    EXPECT_TRUE(parsed.warnings.empty());
}

TEST(ParsePaper, SectionedDocument) {
    const auto parsed = parse_paper("Title: A Study\n\nAbstract\nWe study.\n\n## Introduction\nIntro text.\n"
                                    "Related Work: prior art.\n# Method\nsecret sauce\n");
    EXPECT_EQ(parsed.paper.title, "A Study");
    EXPECT_EQ(parsed.paper.abstract_text, "We study.");
    EXPECT_EQ(parsed.paper.introduction, "Intro text.");
    EXPECT_EQ(parsed.paper.related_work, "prior art.");
    ASSERT_EQ(parsed.paper.extra_sections.size(), 1u);
    EXPECT_EQ(parsed.paper.extra_sections[0].first, "Method");
}

TEST(ParsePaper, TitleOnlyYieldsThreeWarnings) {
    const auto parsed = parse_paper("Only A Title\n");
    EXPECT_EQ(parsed.paper.title, "Only A Title");
    EXPECT_TRUE(parsed.paper.abstract_text.empty());
    EXPECT_TRUE(parsed.paper.introduction.empty());
    EXPECT_TRUE(parsed.paper.related_work.empty());
    EXPECT_EQ(parsed.warnings.size(), 3u);
}

TEST(ParsePaper, EmptyDocumentHasNoTitle) {
    EXPECT_AR_ERROR(parse_paper(""), ErrorCode::MissingTitle);
    EXPECT_AR_ERROR(parse_paper("   \n\n"), ErrorCode::MissingTitle);
}

TEST(ExtractProblem, FixtureKeywords) {
    auto g = gateway_for(scripted({extraction_reply()}));
    const auto frame = extract_problem(load_paper_dir(paper_dir()).paper, *g);
    auto has = [&](const std::string& k) {
        return std::find(frame.keywords.begin(), frame.keywords.end(), k) != frame.keywords.end();
    };
    EXPECT_TRUE(has("Student Feedback Corpus"));
    EXPECT_TRUE(has("Aspect Terms"));
    EXPECT_EQ(frame.keywords.size(), 8u);
}

TEST(ExtractProblem, EmptyBodiesAreEmptyExtraction) {
    auto g = gateway_for(scripted({"Research Tasks:\nResearch Gaps:\nKeywords:\n"}));
    EXPECT_AR_ERROR(extract_problem(ResearchPaper{"t", "a", "i", "r", {}, ""}, *g), ErrorCode::EmptyExtraction);
}

TEST(ExtractProblem, HandCountedFixture) {
    const std::string reply = "Research Tasks:\n- build a corpus\n- annotate aspects\n- report baselines\n"
                              "Research Gaps:\n- no aspect labels\n- only document level\n"
                              "Keywords:\nalpha, beta, gamma, delta, epsilon\n";
    auto g = gateway_for(scripted({reply}));
    const auto f = extract_problem(ResearchPaper{"t", "", "", "", {}, ""}, *g);
    EXPECT_EQ(f.tasks.size(), 3u);
    EXPECT_EQ(f.gaps.size(), 2u);
    EXPECT_EQ(f.keywords.size(), 5u);
    EXPECT_EQ(f.tasks[1], "annotate aspects");
}

TEST(ExtractProblem, MissingHeaderReaskedOnceThenParseError) {
    auto ok = gateway_for(scripted({"nonsense", "Research Tasks:\n- t\nResearch Gaps:\n- g\nKeywords:\nk\n"}));
    EXPECT_EQ(extract_problem(ResearchPaper{"t", "", "", "", {}, ""}, *ok).keywords.size(), 1u);
    auto bad = gateway_for(scripted({"nonsense", "still nonsense", "Research Tasks:\n"}));
    EXPECT_AR_ERROR(extract_problem(ResearchPaper{"t", "", "", "", {}, ""}, *bad), ErrorCode::ParseError);
}

TEST(ExtractProblem, DedupesCaseInsensitively) {
    const auto f = parse_problem_frame("Research Tasks:\n- a\n- A\nResearch Gaps:\n- g\nKeywords:\nX, x, , y\n");
    EXPECT_EQ(f.tasks.size(), 1u);
    EXPECT_EQ(f.keywords, (std::vector<std::string>{"X", "y"}));
}

TEST(PromptContextRender, ContainsAllKeywordsAndIsDeterministic) {
    const auto ctx = fixture_context();
    const auto a = ctx.render();
    EXPECT_EQ(a, ctx.render());
    for (const auto& k : ctx.frame.keywords) EXPECT_NE(a.find(k), std::string::npos) << k;
    const auto t = a.find(ctx.paper.title), ab = a.find("This paper presents"), kw = a.find("Keywords");
    EXPECT_LT(t, ab);
    EXPECT_LT(ab, kw);
}

TEST(PromptContextRender, BudgetClipsToExactLength) {
    const auto ctx = fixture_context();
    const auto full = ctx.render();
    ASSERT_GT(full.size(), 100u);
    const auto clipped = ctx.render(100);
    EXPECT_EQ(clipped.size(), 100u);
    EXPECT_EQ(clipped.substr(clipped.size() - kTruncationMarker.size()), kTruncationMarker);
    for (std::size_t budget : {300u, 1000u, 5000u}) {
        const auto r = ctx.render(budget);
        if (budget >= full.size()) {
            EXPECT_EQ(r, full);
            continue;
        }
        EXPECT_EQ(r.size(), budget);
        EXPECT_NE(r.find("Keywords"), std::string::npos) << budget;
    }
}

TEST(RecentWorks, FixtureProviderFindsRecentWork) {
    auto lit = StubLiteratureProvider::from_file((data_dir() / "literature" / "student_feedback.jsonl").string());
    const auto works = search_recent_works(fixture_context(), 10, lit);
    ASSERT_EQ(works.size(), 2u);
    bool found = false;
    for (const auto& w : works)
        found = found || w.title.rfind("Students feedback analysis model using deep learning-based method", 0) == 0;
    EXPECT_TRUE(found);
}

TEST(RecentWorks, LimitZeroIsEmpty) {
    auto lit = StubLiteratureProvider::from_file((data_dir() / "literature" / "student_feedback.jsonl").string());
    EXPECT_TRUE(search_recent_works(fixture_context(), 0, lit).empty());
}

TEST(RecentWorks, OrderedByKeywordOverlap) {
    PromptContext ctx;
    ctx.paper.title = "t";
    ctx.frame.keywords = {"a", "b", "c"};
    std::vector<LiteratureRecord> recs = {
        {"one", "a", 2020, "1", std::nullopt},        // 1
        {"three", "a b c", 2020, "3", std::nullopt},  // 3
        {"zero", "z", 2020, "0", std::nullopt},       // 0
        {"two", "b c", 2020, "2", std::nullopt},      // 2
        {"later", "c x a", 2021, "2b", std::nullopt},  // 2, newer
    };
    StubLiteratureProvider lit(recs);
    const auto works = search_recent_works(ctx, 5, lit);
    std::vector<std::string> titles;
    for (const auto& w : works) titles.push_back(w.title);
    EXPECT_EQ(titles, (std::vector<std::string>{"three", "later", "two", "one", "zero"}));
    EXPECT_EQ(search_recent_works(ctx, 2, lit).size(), 2u);
}

TEST(RecentWorks, NeverMoreThanLimitAndNoBlankTitles) {
    PromptContext ctx;
    ctx.frame.keywords = {"k"};
    std::vector<LiteratureRecord> recs;
    for (int i = 0; i < 30; ++i) recs.push_back({i % 7 == 0 ? " " : "paper " + std::to_string(i), "k", 2000 + i, "", {}});
    StubLiteratureProvider lit(recs);
    for (std::size_t limit : {0u, 1u, 5u, 29u, 100u}) {
        const auto works = search_recent_works(ctx, limit, lit);
        EXPECT_LE(works.size(), limit);
        for (const auto& w : works) EXPECT_FALSE(text::trim(w.title).empty());
    }
}

TEST(DedupeAndRank, CaseOnlyDuplicatesCollapse) {
    const auto out = dedupe_and_rank({{"Deep Nets", "", 2020, "", 1.0}, {"deep   nets", "", 2020, "", 1.0}});
    EXPECT_EQ(out.size(), 1u);
    EXPECT_TRUE(dedupe_and_rank({}).empty());
}

TEST(DedupeAndRank, TieBrokenByYearThenTitle) {
    const auto out = dedupe_and_rank(
        {{"B old", "", 2021, "", 1.0}, {"C new", "", 2023, "", 1.0}, {"A new", "", 2023, "", 1.0}, {"top", "", 1999, "", 2.0}});
    std::vector<std::string> titles;
    for (const auto& w : out) titles.push_back(w.title);
    EXPECT_EQ(titles, (std::vector<std::string>{"top", "A new", "C new", "B old"}));
}

TEST(DedupeAndRank, Idempotent) {
    std::vector<RelatedWork> in;
    std::mt19937 rng(7);
    for (int i = 0; i < 40; ++i)
        in.push_back({"T" + std::to_string(rng() % 15), "", static_cast<int>(2000 + rng() % 5), "",
                      static_cast<double>(rng() % 4)});
    const auto once = dedupe_and_rank(in);
    EXPECT_EQ(dedupe_and_rank(once), once);
}

TEST(LiteratureRecords, AcceptsLinesArraysAndEnvelope) {
    EXPECT_EQ(parse_literature_records("{\"title\":\"a\",\"year\":2020}\n{\"title\":\"b\"}\n").size(), 2u);
    EXPECT_EQ(parse_literature_records("[{\"title\":\"a\"}]").size(), 1u);
    const auto env = parse_literature_records(R"({"data":[{"paperId":"p1","title":"x","abstract":null,"year":2022}]})");
    ASSERT_EQ(env.size(), 1u);
    EXPECT_EQ(env[0].id, "p1");
    EXPECT_EQ(env[0].year, 2022);
    EXPECT_AR_ERROR(parse_literature_records("{not json"), ErrorCode::MalformedResponse);
}

TEST(HttpLiterature, QueriesSearchEndpointAndRetries) {
    httplib::Server srv;
    int hits = 0;
    std::string query, key;
    srv.Get("/graph/v1/paper/search", [&](const httplib::Request& r, httplib::Response& res) {
        if (++hits == 1) {
            res.status = 429;
            return;
        }
        query = r.get_param_value("query");
        key = r.get_header_value("x-api-key");
        res.set_content(R"({"total":1,"data":[{"paperId":"abc","title":"Found","abstract":"text","year":2024}]})",
                        "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    ::setenv("AR_TEST_S2_KEY", "k123", 1);
    HttpLiteratureConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.api_key_env = "AR_TEST_S2_KEY";
    HttpLiteratureProvider p(c);
    p.set_sleeper([](std::chrono::milliseconds) {});
    const auto recs = p.search({"student feedback", 5});
    srv.stop();
    t.join();
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].title, "Found");
    EXPECT_EQ(hits, 2);
    EXPECT_EQ(query, "student feedback");
    EXPECT_EQ(key, "k123");
}

TEST(HttpLiterature, UnreachableIsProviderUnavailable) {
    HttpLiteratureConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.max_retries = 1;
    c.timeout = std::chrono::seconds(1);
    HttpLiteratureProvider p(c);
    p.set_sleeper([](std::chrono::milliseconds) {});
    EXPECT_AR_ERROR(p.search({"q", 1}), ErrorCode::ProviderUnavailable);
}

TEST(CorpusJson, RoundTrip) {
    const auto ctx = fixture_context();
    EXPECT_EQ(paper_from_json(to_json(ctx.paper)), ctx.paper);
    EXPECT_EQ(frame_from_json(to_json(ctx.frame)), ctx.frame);
    RelatedWork w{"t", "a", 2020, "id", 1.5};
    EXPECT_EQ(related_from_json(to_json(w)), w);
}
