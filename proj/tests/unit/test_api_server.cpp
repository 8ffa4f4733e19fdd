#include "autoresearch/api_server.hpp"

#include "support.hpp"

#include <httplib.h>

#include <thread>

using namespace autoresearch;
using namespace autoresearch::store;
using namespace testsupport;
using nlohmann::json;

namespace {

struct ApiFixture : ::testing::Test {
    TempDir dir;
    std::unique_ptr<RunStore> store;
    std::unique_ptr<api::ApiServer> server;
    std::unique_ptr<httplib::Client> client;

    void SetUp() override { store = std::make_unique<RunStore>(dir.path()); }
    void TearDown() override {
        client.reset();
        if (server) server->stop();
    }

    void serve(std::string token = {}) {
        api::ServerOptions o;
        o.auth_token = std::move(token);
        server = std::make_unique<api::ApiServer>(*store, o);
        const int port = server->start();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(10, 0);
    }

    std::string run_with_events(int n, bool finished) {
        const auto id = store->create_run("toy", json::object());
        for (int i = 0; i < n; ++i) store->append_event(id, EventKind::Turn, {{"i", i}});
        if (finished) {
            RunState s;
            s.run_id = id;
            s.outcome = Outcome::Completed;
            store->update_state(id, s);
        }
        return id;
    }
};

// "id:" lines of an SSE body
std::vector<std::uint64_t> sse_ids(const std::string& body) {
    std::vector<std::uint64_t> out;
    for (std::size_t pos = 0; (pos = body.find("id: ", pos)) != std::string::npos; pos += 4)
        if (pos == 0 || body[pos - 1] == '\n') out.push_back(std::stoull(body.substr(pos + 4)));
    return out;
}

} // namespace

TEST_F(ApiFixture, EmptyRunList) {
    serve();
    auto r = client->Get("/runs");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body), json::array());
}

TEST_F(ApiFixture, ListAndGet) {
    const auto id = run_with_events(2, true);
    serve();
    auto r = client->Get("/runs");
    ASSERT_TRUE(r);
    const auto list = json::parse(r->body);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0]["run_id"], id);
    EXPECT_EQ(list[0]["outcome"], "completed");
    EXPECT_EQ(list[0]["task"], "toy");

    r = client->Get("/runs/" + id);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["run_id"], id);

    r = client->Get("/runs/run-missing");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "UnknownRun");
}

TEST_F(ApiFixture, EventStreamOfFinishedRun) {
    const auto id = run_with_events(10, true);
    serve();
    auto r = client->Get("/runs/" + id + "/events?from=6");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_NE(r->get_header_value("Content-Type").find("text/event-stream"), std::string::npos);
    EXPECT_EQ(sse_ids(r->body), (std::vector<std::uint64_t>{6, 7, 8, 9, 10}));
    EXPECT_NE(r->body.find("event: end"), std::string::npos);
    r = client->Get("/runs/" + id + "/events?from=abc");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    r = client->Get("/runs/run-nope/events");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);
}

TEST_F(ApiFixture, EventStreamFollowsLiveRun) {
    const auto id = run_with_events(1, false);
    serve();
    std::thread writer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        for (int i = 0; i < 5; ++i) store->append_event(id, EventKind::Observation, {{"j", i}});
        RunState s;
        s.run_id = id;
        s.outcome = Outcome::Completed;
        store->update_state(id, s);
    });
    std::string body;
    auto r = client->Get("/runs/" + id + "/events", [&](const char* data, std::size_t n) {
        body.append(data, n);
        return true;
    });
    writer.join();
    ASSERT_TRUE(r);
    EXPECT_EQ(sse_ids(body), (std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6}));
}

TEST_F(ApiFixture, FeedbackStatuses) {
    const auto live = run_with_events(0, false);
    const auto done = run_with_events(0, true);
    auto ch = std::make_shared<FeedbackChannel>();
    store->attach(live, ch);
    serve();

    auto r = client->Post("/runs/" + live + "/feedback", R"({"author": "ann", "text": "add dropout"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 202);
    EXPECT_EQ(json::parse(r->body)["seq"], 1);
    ASSERT_EQ(ch->enqueued(), 1u);
    EXPECT_EQ(ch->drain()[0].author, "ann");

    r = client->Post("/runs/" + done + "/feedback", R"({"text": "late"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "RunTerminal");

    r = client->Post("/runs/run-ghost/feedback", R"({"text": "x"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);

    r = client->Post("/runs/" + live + "/feedback", R"({"author": "ann"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);

    r = client->Post("/runs/" + live + "/feedback", "not json", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
}

TEST_F(ApiFixture, ControlActions) {
    const auto id = run_with_events(0, false);
    auto ch = std::make_shared<FeedbackChannel>();
    store->attach(id, ch);
    serve();
    auto r = client->Post("/runs/" + id + "/control", R"({"action": "pause"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 202);
    EXPECT_TRUE(ch->paused());
    r = client->Post("/runs/" + id + "/control", R"({"action": "abort"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_TRUE(ch->aborted());
    r = client->Post("/runs/" + id + "/control", R"({"action": "explode"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
}

TEST_F(ApiFixture, TokenRequiredWhenConfigured) {
    serve("s3cret");
    auto r = client->Get("/runs");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 401);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "Unauthorized");
    r = client->Get("/runs", {{"X-Auth-Token", "wrong"}});
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 401);
    r = client->Get("/runs", {{"X-Auth-Token", "s3cret"}});
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
}

TEST_F(ApiFixture, StopWithOpenStreamReturns) {
    const auto id = run_with_events(1, false);
    serve();
    std::thread reader([&] {
        client->Get("/runs/" + id + "/events", [](const char*, std::size_t) { return true; });
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(150));
    const auto t0 = std::chrono::steady_clock::now();
    server->stop();
    reader.join();
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

TEST(HttpStatus, Mapping) {
    EXPECT_EQ(api::http_status_for(ErrorCode::UnknownRun), 404);
    EXPECT_EQ(api::http_status_for(ErrorCode::RunTerminal), 409);
    EXPECT_EQ(api::http_status_for(ErrorCode::Unauthorized), 401);
    EXPECT_EQ(api::http_status_for(ErrorCode::InvalidArgument), 400);
}
