#include "autoresearch/ml.hpp"
#include "autoresearch/text.hpp"

#include "support.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

using namespace autoresearch;
using namespace autoresearch::ml;
using namespace testsupport;
using nlohmann::json;

namespace {

struct MlFixture : ::testing::Test {
    TempDir dir;
    std::unique_ptr<sandbox::Workspace> ws;

    void SetUp() override {
        fs::create_directories(dir / "ws");
        sandbox::ExecutionPolicy policy;
        policy.timeout = std::chrono::seconds(30);
        ws = std::make_unique<sandbox::Workspace>(dir / "ws", policy);
    }

    TaskPackage linear_task() const {
        TaskPackage t;
        t.root = dir.path();
        t.name = "toy";
        t.metric = "mse";
        t.direction = Direction::LowerBetter;
        t.train_entrypoint = std::string(kBuiltinLinear);
        return t;
    }
};

std::size_t data_lines(const fs::path& tsv) {
    std::ifstream in(tsv);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n == 0 ? 0 : n - 1;
}

std::string num(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

std::string fenced(const std::string& code) { return "Here you go.\n```python\n" + code + "```\n"; }

// closed-form simple regression
std::pair<double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double w = sxy / sxx;
    return {w, my - w * mx};
}

HubEntry entry(std::string name, double score, std::vector<std::string> tags = {"sentiment"}) {
    HubEntry e;
    e.name = std::move(name);
    e.description = "model for " + e.name;
    e.score = score;
    e.tags = std::move(tags);
    return e;
}

} // namespace

TEST(Retrieval, HybridModelInstructionFindsCnnBilstm) {
    auto hub = StubHub::from_files(data_dir() / "hub" / "models.jsonl", std::nullopt);
    const auto got = retrieve_model("retrieve the hybrid model of CNN, BiLSTM, and attention mechanisms", hub);
    ASSERT_FALSE(got.empty());
    EXPECT_EQ(got.front().name, "cnn-bilstm-attention-sentiment");
    EXPECT_NE(got.front().description.find("CNN"), std::string::npos);
    EXPECT_NE(got.front().description.find("BiLSTM"), std::string::npos);
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_GE(got[i - 1].score, got[i].score);
}

TEST(Retrieval, EmptyHubGivesEmptyList) {
    StubHub hub({}, {});
    EXPECT_TRUE(retrieve_model("anything at all", hub).empty());
}

TEST(Retrieval, OrderFollowsHandSortedScores) {
    StubHub hub({entry("delta", 0.3), entry("bravo", 0.9), entry("charlie", 0.5), entry("alpha", 0.9)}, {});
    const auto got = retrieve_model("sentiment", hub, 10);
    std::vector<std::string> names;
    for (const auto& m : got) names.push_back(m.name);
    EXPECT_EQ(names, (std::vector<std::string>{"alpha", "bravo", "charlie", "delta"}));
}

TEST(Retrieval, NamesUniqueAndLimitRespected) {
    StubHub hub({entry("a", 0.1), entry("a", 0.7), entry("b", 0.2), entry("c", 0.3)}, {});
    const auto got = retrieve_model("sentiment", hub, 2);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].name, "a");
    EXPECT_DOUBLE_EQ(got[0].score, 0.7);
    EXPECT_EQ(got[1].name, "c");
}

TEST(Retrieval, InstructionTermsDropStopwords) {
    EXPECT_EQ(instruction_terms("Retrieve the hybrid model of CNN and BiLSTM"),
              (std::vector<std::string>{"hybrid", "cnn", "bilstm"}));
}

TEST_F(MlFixture, RetrieveDatasetRowCounts) {
    auto hub = StubHub::from_files(std::nullopt, data_dir() / "hub" / "datasets.jsonl");
    const auto save = dir / "ws" / "data" / "toy";
    const auto cand = retrieve_dataset("toy linear regression data", save, hub);
    EXPECT_EQ(cand.name, "toy-linear-regression");
    EXPECT_EQ(data_lines(save / "train.tsv"), 80u);
    EXPECT_EQ(data_lines(save / "test.tsv"), 20u);
    const auto m = read_manifest(save);
    ASSERT_NE(m.split("train"), nullptr);
    EXPECT_EQ(m.split("train")->row_count, 80u);
    EXPECT_EQ(m.split("test")->row_count, 20u);
    EXPECT_EQ(read_split(save, "test").rows.size(), 20u);
}

TEST_F(MlFixture, RetrieveDatasetRoundTrip) {
    StubHub hub({}, {[] {
                    auto e = entry("tiny-table", 1.0, {"tabular"});
                    e.source = R"(inline:{"columns": ["a", "b"], "splits": {"train": [["1", "x"], ["2", "y\tz"]]}})";
                    return e;
                }()});
    const auto cand = retrieve_dataset("tabular", dir / "t", hub);
    const auto t = read_split(dir / "t", "train");
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][1], "y\tz");
    EXPECT_EQ(cand.columns, (std::vector<std::string>{"a", "b"}));
}

TEST_F(MlFixture, RetrieveDatasetNoMatch) {
    auto hub = StubHub::from_files(std::nullopt, data_dir() / "hub" / "datasets.jsonl");
    EXPECT_AR_ERROR(retrieve_dataset("quantum chromodynamics lattice", dir / "q", hub), ErrorCode::NoMatch);
}

TEST(Dataset, EscapingRoundTrips) {
    for (const std::string s : {"plain", "tab\there", "new\nline", "back\\slash", "cr\rx", ""})
        EXPECT_EQ(unescape_field(escape_field(s)), s);
}

TEST(Checkup, AllRequiredPresentPasses) {
    DatasetCandidate d;
    d.columns = {"x", "y"};
    d.splits = {{"train", 80, "train.tsv"}, {"test", 20, "test.tsv"}};
    DataRequirements r;
    r.columns = {"x", "y"};
    r.splits = {"train", "test"};
    r.metric = "mse";
    const auto rep = post_checkup(d, r);
    EXPECT_TRUE(rep.passed);
    EXPECT_FALSE(rep.checks.empty());
}

TEST(Checkup, PlanNeedingTestSplitFails) {
    DatasetCandidate d;
    d.columns = {"x", "y"};
    d.splits = {{"train", 80, "train.tsv"}};
    idea::ExperimentPlan plan;
    plan.raw = "Train the regressor on the training data, then report mse on the test set.";
    const auto req = derive_requirements(plan);
    EXPECT_EQ(req.metric, "mse");
    const auto rep = post_checkup(d, plan);
    EXPECT_FALSE(rep.passed);
    bool named = false;
    for (const auto& c : rep.checks)
        if (!c.passed && c.name.find("test") != std::string::npos) named = true;
    EXPECT_TRUE(named) << rep.render();
}

TEST(Checkup, EmptyRequirementsVacuous) {
    const auto rep = post_checkup(DatasetCandidate{}, DataRequirements{});
    EXPECT_TRUE(rep.passed);
    EXPECT_TRUE(rep.checks.empty());
}

TEST(Checkup, PassedIsConjunction) {
    std::mt19937 rng(11);
    const std::vector<std::string> pool = {"train", "test", "validation", "x", "y", "label"};
    for (int i = 0; i < 100; ++i) {
        DatasetCandidate d;
        DataRequirements r;
        for (const auto& p : pool) {
            if (rng() % 2) d.columns.push_back(p);
            if (rng() % 2) d.splits.push_back({p, rng() % 3, p + ".tsv"});
            if (rng() % 3 == 0) r.columns.push_back(p);
            if (rng() % 3 == 0) r.splits.push_back(p);
        }
        if (rng() % 2) r.metric = rng() % 2 ? "accuracy" : "bleu";
        const auto rep = post_checkup(d, r);
        bool all = true;
        for (const auto& c : rep.checks) all = all && c.passed;
        EXPECT_EQ(rep.passed, all);
    }
}

TEST_F(MlFixture, ProcessIdentityOnTenRows) {
    std::vector<Row> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({std::to_string(i), std::to_string(2 * i + 1)});
    write_dataset(dir / "ws" / "raw", "raw", {"x", "y"}, {{"train", rows}});
    auto gw = gateway_for(scripted({fenced("def transform(row):\n    return {'model_input': row['x'], 'model_output': row['y']}\n")}));
    const auto rep = process_dataset("keep rows as they are", {"raw"}, {"proc"}, *gw, *ws);
    const auto t = read_split(dir / "ws" / "proc", "train");
    EXPECT_EQ(t.rows.size(), 10u);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"model_input", "model_output"}));
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(t.rows[i][0], std::to_string(i));
        EXPECT_EQ(t.rows[i][1], std::to_string(2 * i + 1));
    }
    ASSERT_EQ(rep.rows_per_split.size(), 1u);
    EXPECT_EQ(rep.rows_per_split[0].second, 10u);
    EXPECT_FALSE(fs::exists(dir / "ws" / ".autoresearch"));
}

TEST_F(MlFixture, ProcessArityMismatch) {
    auto gw = gateway_for(scripted({}));
    EXPECT_AR_ERROR(process_dataset("x", {"a", "b"}, {"c"}, *gw, *ws), ErrorCode::CountMismatch);
    EXPECT_EQ(gw->calls(), 0u);
}

TEST_F(MlFixture, ProcessUppercaseMatchesHandOracle) {
    write_dataset(dir / "ws" / "raw", "raw", {"text", "label"},
                  {{"train", {{"hello world", "pos"}, {"Mixed Case", "neg"}, {"abc 123", "pos"}}}});
    auto gw = gateway_for(scripted({fenced("def transform(row):\n"
                                           "    return {'model_input': row['text'].upper(), 'model_output': row['label']}\n")}));
    process_dataset("uppercase the input text", {"raw"}, {"up"}, *gw, *ws);
    const auto t = read_split(dir / "ws" / "up", "train");
    EXPECT_EQ(t.column("model_input"), (std::vector<std::string>{"HELLO WORLD", "MIXED CASE", "ABC 123"}));
    EXPECT_EQ(t.column("model_output"), (std::vector<std::string>{"pos", "neg", "pos"}));
}

TEST_F(MlFixture, ProcessBadTransformFails) {
    write_dataset(dir / "ws" / "raw", "raw", {"x"}, {{"train", {{"1"}}}});
    auto gw = gateway_for(scripted({fenced("def transform(row):\n    return {'only': 1}\n")}));
    EXPECT_AR_ERROR(process_dataset("x", {"raw"}, {"out"}, *gw, *ws), ErrorCode::TransformFailed);
}

TEST_F(MlFixture, TrainSlopeMatchesLeastSquares) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<Row> rows;
    std::vector<double> xs, ys;
    for (int i = 0; i < 400; ++i) {
        const double x = ux(rng), y = 2 * x + 1 + noise(rng);
        xs.push_back(x);
        ys.push_back(y);
        rows.push_back({num(x), num(y)});
    }
    write_dataset(dir / "ws" / "toy", "toy", {"x", "y"}, {{"train", rows}});
    Hyperparameters hp;
    hp.epochs = 200;
    hp.batch_size = 10;
    hp.learning_rate = 0.1;
    const auto rep = train_model(linear_task(), "linear", {"toy"}, "out", hp, *ws);
    const auto model = json::parse(slurp(dir / "ws" / "out" / "trained_model" / "model.json"));
    const auto [ls_w, ls_b] = least_squares(xs, ys);
    EXPECT_NEAR(model["w"].get<double>(), ls_w, 0.05);
    EXPECT_NEAR(model["w"].get<double>(), 2.0, 0.05);
    EXPECT_NEAR(model["b"].get<double>(), ls_b, 0.05);
    EXPECT_NE(rep.message.find("trained_model"), std::string::npos);
}

TEST_F(MlFixture, TrainZeroEpochsRejected) {
    write_dataset(dir / "ws" / "toy", "toy", {"x", "y"}, {{"train", {{"1", "3"}}}});
    Hyperparameters hp;
    hp.epochs = 0;
    hp.batch_size = 1;
    hp.learning_rate = 0.1;
    try {
        train_model(linear_task(), "linear", {"toy"}, "out", hp, *ws);
        FAIL() << "expected TrainFailed";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TrainFailed);
        EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
    }
}

TEST_F(MlFixture, TrainMissingEntrypoint) {
    auto task = linear_task();
    task.train_entrypoint.clear();
    Hyperparameters hp{1, 1, 0, 0.0, 0.1};
    EXPECT_AR_ERROR(train_model(task, "linear", {"toy"}, "out", hp, *ws), ErrorCode::MissingEntrypoint);
}

TEST_F(MlFixture, TrainDivergenceReported) {
    write_dataset(dir / "ws" / "toy", "toy", {"x", "y"}, {{"train", {{"100", "201"}, {"200", "401"}}}});
    Hyperparameters hp{50, 2, 0, 0.0, 10.0};
    EXPECT_AR_ERROR(train_model(linear_task(), "linear", {"toy"}, "out", hp, *ws), ErrorCode::TrainFailed);
}

TEST_F(MlFixture, ExecuteProducesOnePredictionPerTestRow) {
    auto hub = StubHub::from_files(std::nullopt, data_dir() / "hub" / "datasets.jsonl");
    retrieve_dataset("toy linear regression", dir / "ws" / "data", hub);
    Hyperparameters hp{20, 16, 0, 0.0, 0.01};
    train_model(linear_task(), "linear", {"data"}, "out", hp, *ws);
    const auto n = execute_on_test(linear_task(), "out", {"data"}, "preds.json", 8, "", *ws);
    EXPECT_EQ(n, 20u);
    EXPECT_EQ(read_predictions(dir / "ws" / "preds.json").size(), 20u);
}

TEST_F(MlFixture, ExecuteMatchesHandEvaluation) {
    write_dataset(dir / "ws" / "d", "d", {"x", "y"},
                  {{"train", {{"0", "1"}, {"1", "3"}, {"2", "5"}}}, {"test", {{"0", "1"}, {"1", "3"}, {"2", "5"}}}});
    Hyperparameters hp{30, 3, 0, 0.0, 0.05};
    train_model(linear_task(), "linear", {"d"}, "out", hp, *ws);
    const auto model = json::parse(slurp(dir / "ws" / "out" / "trained_model" / "model.json"));
    const double w = model["w"], b = model["b"];
    execute_on_test(linear_task(), "out", {"d"}, "p.json", 2, "x", *ws);
    const auto preds = read_predictions(dir / "ws" / "p.json");
    ASSERT_EQ(preds.size(), 3u);
    EXPECT_NEAR(std::stod(preds[0]), b, 1e-9);
    EXPECT_NEAR(std::stod(preds[1]), b + w, 1e-9);
    EXPECT_NEAR(std::stod(preds[2]), b + 2 * w, 1e-9);
}

TEST_F(MlFixture, ExecuteWithoutArtifact) {
    EXPECT_AR_ERROR(execute_on_test(linear_task(), "nowhere", {"d"}, "p.json", 2, "x", *ws), ErrorCode::ArtifactMissing);
}

TEST_F(MlFixture, EvaluateIdenticalPredictions) {
    write_dataset(dir / "ws" / "d", "d", {"x", "y"}, {{"test", {{"0", "1"}, {"1", "3"}, {"2", "5"}}}});
    write(dir / "ws" / "p.json", R"([{"prediction": 1}, {"prediction": 3}, {"prediction": 5}])");
    const auto m = evaluate_predictions({"d"}, "p.json", "y", {"accuracy", "mse", "pearson"}, *ws);
    EXPECT_DOUBLE_EQ(m.at("accuracy"), 1.0);
    EXPECT_DOUBLE_EQ(m.at("mse"), 0.0);
    EXPECT_NEAR(m.at("pearson"), 1.0, 1e-12);
}

TEST(Metrics, HandArithmetic) {
    EXPECT_NEAR(compute_metric("mse", {"1", "2", "3"}, {"1", "2", "4"}), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(compute_metric("rmse", {"1", "2", "3"}, {"1", "2", "4"}), std::sqrt(1.0 / 3.0), 1e-12);
    EXPECT_DOUBLE_EQ(compute_metric("accuracy", {"pos", "neg", "pos"}, {"pos", "neg", "pos"}), 1.0);
    EXPECT_NEAR(compute_metric("accuracy", {"pos", "neg", "pos", "neg"}, {"pos", "pos", "pos", "neg"}), 0.75, 1e-12);
}

TEST(Metrics, RowMismatchAndUnknown) {
    EXPECT_AR_ERROR(compute_metric("mse", {"1", "2", "3", "4", "5", "6"}, {"1", "2", "3", "4", "5"}), ErrorCode::RowMismatch);
    EXPECT_AR_ERROR(compute_metric("bleu", {"a"}, {"a"}), ErrorCode::UnknownMetric);
}

TEST(Metrics, SelfComparisonProperties) {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int i = 0; i < 50; ++i) {
        std::vector<std::string> v;
        const auto n = 2 + rng() % 30;
        for (std::size_t k = 0; k < n; ++k) v.push_back(num(u(rng)));
        EXPECT_DOUBLE_EQ(compute_metric("accuracy", v, v), 1.0);
        EXPECT_NEAR(compute_metric("pearson", v, v), 1.0, 1e-9);
    }
}

TEST(Trainer, ConvergesMonotonicallyOnNoiselessData) {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(i / 40.0);
        y.push_back(3.0 * x.back() - 0.5);
    }
    const auto [ls_w, ls_b] = least_squares(x, y);
    double prev = INFINITY;
    for (long epochs : {10L, 50L, 200L}) {
        Hyperparameters hp{epochs, 40, 0, 0.0, 0.5};
        const auto log = train_linear(x, y, hp);
        const double d = std::hypot(log.model.w - ls_w, log.model.b - ls_b);
        EXPECT_LT(d, prev) << epochs;
        prev = d;
        for (std::size_t e = 1; e < log.epoch_loss.size(); ++e) EXPECT_LE(log.epoch_loss[e], log.epoch_loss[e - 1] + 1e-12);
    }
    EXPECT_LT(prev, 0.05);
}

TEST(HttpHubClient, SearchesAndMaterializesFromMockServer) {
    httplib::Server srv;
    std::string search, auth;
    srv.Get("/api/models", [&](const httplib::Request& r, httplib::Response& res) {
        search = r.get_param_value("search");
        auth = r.get_header_value("Authorization");
        res.set_content(R"([{"id": "b/model", "downloads": 5, "pipeline_tag": "text-classification"},
                            {"id": "a/model", "downloads": 10}])",
                        "application/json");
    });
    srv.Get("/api/datasets", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"([{"id": "org/toy", "downloads": 1}])", "application/json");
    });
    srv.Get("/splits", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"splits": [{"config": "default", "split": "train"}, {"config": "default", "split": "test"}]})",
                        "application/json");
    });
    srv.Get("/rows", [&](const httplib::Request& r, httplib::Response& res) {
        const auto split = r.get_param_value("split");
        const auto offset = std::stoul(r.get_param_value("offset"));
        json page = {{"features", {{{"name", "x"}}, {{"name", "y"}}}}, {"num_rows_total", split == "train" ? 3 : 1}};
        page["rows"] = json::array();
        const std::size_t total = split == "train" ? 3 : 1;
        for (std::size_t i = offset; i < total; ++i) page["rows"].push_back({{"row", {{"x", i}, {"y", 2 * i + 1}}}});
        res.set_content(page.dump(), "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    ::setenv("AR_TEST_HUB_TOKEN", "hubkey", 1);
    HttpHubConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.rows_base_url = c.base_url;
    c.token_env = "AR_TEST_HUB_TOKEN";
    HttpHub hub(c);
    TempDir d;
    std::vector<ModelCandidate> models;
    DatasetCandidate ds;
    try {
        models = retrieve_model("retrieve the hybrid model of CNN, BiLSTM, and attention mechanisms", hub);
        ds = retrieve_dataset("toy regression", d / "ds", hub);
    } catch (...) {
        srv.stop();
        t.join();
        throw;
    }
    srv.stop();
    t.join();

    ASSERT_EQ(models.size(), 2u);
    EXPECT_EQ(models[0].name, "a/model");
    EXPECT_EQ(search, "hybrid cnn bilstm");
    EXPECT_EQ(auth, "Bearer hubkey");
    EXPECT_EQ(read_split(d / "ds", "train").rows.size(), 3u);
    EXPECT_EQ(read_split(d / "ds", "test").rows.size(), 1u);
    EXPECT_EQ(read_split(d / "ds", "train").rows[2], (Row{"2", "5"}));
}

TEST(HttpHubClient, UnreachableIsHubUnavailable) {
    HttpHubConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.timeout = std::chrono::seconds(2);
    HttpHub hub(c);
    EXPECT_AR_ERROR(hub.search_models("cnn", 3), ErrorCode::HubUnavailable);
}
