#pragma once
#include "autoresearch/error.hpp"
#include "autoresearch/run_store.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace autoresearch::api {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 0; // 0 picks a free port
    // Required in X-Auth-Token when non-empty. Read from the environment by callers.
    std::string auth_token;
};

// GET  /runs
// GET  /runs/{id}
// GET  /runs/{id}/events?from=N   text/event-stream
// POST /runs/{id}/feedback        {author, text, in_reply_to?}
// POST /runs/{id}/control         {action: pause|resume|abort}
// Errors: {"error": {"code", "message"}}.
class ApiServer {
public:
    ApiServer(store::RunStore& store, ServerOptions options = {});
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Binds and serves on a background thread. Returns the bound port.
    int start();
    // Blocks the calling thread until stop().
    void run();
    void stop();
    int port() const { return port_; }

private:
    void bind();
    void routes();

    store::RunStore& store_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    int port_ = 0;
};

int http_status_for(ErrorCode code);

} // namespace autoresearch::api
