#include "autoresearch/text.hpp"

#include <json.hpp>

#include "support.hpp"

#include <httplib.h>

#include <csignal>
#include <set>
#include <sys/wait.h>
#include <unistd.h>

using namespace autoresearch;
using namespace testsupport;
using nlohmann::json;

namespace {

const std::string kCli = AUTORESEARCH_CLI;

std::string cli(const std::string& args) { return quote(kCli) + " " + args; }

std::string idea_args(const fs::path& out) {
    const auto d = data_dir();
    return "idea --paper-dir " + quote((d / "papers" / "student_feedback").string()) + " --session " +
           quote((d / "sessions" / "idea_student_feedback.jsonl").string()) + " --literature " +
           quote((d / "literature" / "student_feedback.jsonl").string()) + " -o " + quote(out.string());
}

std::string run_args(const fs::path& idea, const fs::path& runs, int trials) {
    const auto d = data_dir();
    return "run --idea " + quote(idea.string()) + " --task " + quote((d / "tasks" / "toy_linear").string()) +
           " --session " + quote((d / "sessions" / "agent_toy_linear.jsonl").string()) + " --summaries local --runs-dir " +
           quote(runs.string()) + " --trials " + std::to_string(trials) + " --parallel 4";
}

} // namespace

TEST(Cli, IdeaProducesNineStagePlan) {
    TempDir d;
    const auto r = run_shell(cli(idea_args(d / "idea.json")));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const auto j = json::parse(slurp(d / "idea.json"));
    EXPECT_EQ(j["plan"]["design"].size(), 9u);
    EXPECT_FALSE(j["hypothesis"]["method"].get<std::string>().empty());
}

TEST(Cli, IdeaIsByteIdentical) {
    TempDir d;
    ASSERT_EQ(run_shell(cli(idea_args(d / "a.json"))).exit_code, 0);
    ASSERT_EQ(run_shell(cli(idea_args(d / "b.json"))).exit_code, 0);
    EXPECT_EQ(slurp(d / "a.json"), slurp(d / "b.json"));
}

TEST(Cli, UsageErrorsExitTwo) {
    TempDir d;
    EXPECT_EQ(run_shell(cli("idea --paper-dir " + quote((d / "missing").string()))).exit_code, 2);
    EXPECT_EQ(run_shell(cli("eval")).exit_code, 2);
    EXPECT_EQ(run_shell(cli("frobnicate")).exit_code, 2);
    ASSERT_EQ(run_shell(cli(idea_args(d / "idea.json"))).exit_code, 0);
    EXPECT_EQ(run_shell(cli(run_args(d / "idea.json", d / "runs", 0))).exit_code, 2);
    EXPECT_FALSE(fs::exists(d / "runs"));
}

TEST(Cli, ConfigWithCredentialRejected) {
    TempDir d;
    write(d / "cfg.json", R"({"provider": {"base_url": "http://x", "model": "m", "api_key": "sk-123"}})");
    ASSERT_EQ(run_shell(cli(idea_args(d / "idea.json"))).exit_code, 0);
    const auto r = run_shell(cli("run --config " + quote((d / "cfg.json").string()) + " --idea " +
                                 quote((d / "idea.json").string()) + " --task " +
                                 quote((data_dir() / "tasks" / "toy_linear").string()) + " 2>&1"));
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("credentials"), std::string::npos);
}

TEST(Cli, RunEightTrialsThenReplay) {
    TempDir d;
    ASSERT_EQ(run_shell(cli(idea_args(d / "idea.json"))).exit_code, 0);
    const auto r = run_shell(cli(run_args(d / "idea.json", d / "runs", 8) + " --report " + quote((d / "rep.json").string())));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const auto rep = json::parse(slurp(d / "rep.json"));
    ASSERT_EQ(rep["trial_results"].size(), 8u);
    EXPECT_DOUBLE_EQ(rep["rows"][0]["success_rate"].get<double>(), 100.0);
    EXPECT_GE(rep["rows"][0]["improvement"].get<double>(), 10.0);
    std::set<std::string> ids;
    for (const auto& run : rep["runs"]) ids.insert(run["run_id"].get<std::string>());
    EXPECT_EQ(ids.size(), 8u);

    const auto id = *ids.begin();
    const auto a = run_shell(cli("replay " + id + " --runs-dir " + quote((d / "runs").string())));
    const auto b = run_shell(cli("replay " + id + " --runs-dir " + quote((d / "runs").string())));
    ASSERT_EQ(a.exit_code, 0);
    EXPECT_EQ(a.output, b.output);
    for (int s = 1; s <= 4; ++s) EXPECT_NE(a.output.find("=== Step " + std::to_string(s) + " ==="), std::string::npos);
    EXPECT_EQ(a.output.find("=== Step 5 ==="), std::string::npos);

    EXPECT_EQ(run_shell(cli("replay run-nope --runs-dir " + quote((d / "runs").string()))).exit_code, 1);
}

TEST(Cli, EvalTables) {
    const auto r = run_shell(cli("eval --table " + quote((data_dir() / "tables" / "improvement.json").string()) +
                                 " --table " + quote((data_dir() / "tables" / "success_rate.json").string())));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const auto j = json::parse(r.output);
    ASSERT_EQ(j["tables"].size(), 2u);
    EXPECT_NEAR(j["tables"][0]["average"]["gpt-4"].get<double>(), 39.74, 1e-9);
    EXPECT_NEAR(j["tables"][0]["average"]["claude-v2.1"].get<double>(), 38.02, 1e-9);
}

TEST(Cli, ServeListsEmptyStoreAndStopsOnSignal) {
    TempDir d;
    int err[2];
    ASSERT_EQ(pipe(err), 0);
    const pid_t pid = fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
        dup2(err[1], STDERR_FILENO);
        close(err[0]);
        close(err[1]);
        const auto runs = (d / "runs").string();
        execl(kCli.c_str(), kCli.c_str(), "serve", "--listen", "127.0.0.1:0", "--runs-dir", runs.c_str(), nullptr);
        _exit(127);
    }
    close(err[1]);
    std::string line;
    char c;
    while (read(err[0], &c, 1) == 1 && c != '\n') line += c;
    close(err[0]);
    const auto colon = line.rfind(':');
    ASSERT_NE(colon, std::string::npos) << line;
    const int port = std::stoi(line.substr(colon + 1));

    httplib::Client client("127.0.0.1", port);
    auto r = client.Get("/runs");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body), json::array());

    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
}
