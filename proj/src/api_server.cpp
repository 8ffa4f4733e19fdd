#include "autoresearch/api_server.hpp"
#include "autoresearch/text.hpp"

#include <httplib.h>
#include <json.hpp>

namespace autoresearch::api {

using nlohmann::json;

namespace {

std::string dump(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(dump(body) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json run_summary(const store::RunRecord& r) {
    return {{"run_id", r.state.run_id},
            {"task", r.task},
            {"outcome", store::outcome_name(r.state.outcome)},
            {"step_index", r.state.step_index},
            {"awaiting_feedback", r.state.awaiting_feedback},
            {"paused", r.state.paused},
            {"created", r.created},
            {"updated", r.updated}};
}

std::string sse_frame(const store::TraceEvent& ev) {
    return "id: " + std::to_string(ev.seq) + "\nevent: " + std::string(store::kind_name(ev.kind)) +
           "\ndata: " + dump(ev.to_json()) + "\n\n";
}

} // namespace

int http_status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::UnknownRun: return 404;
    case ErrorCode::RunTerminal: return 409;
    case ErrorCode::RunNotAttached: return 409;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedInput: return 400;
    default: return 500;
    }
}

ApiServer::ApiServer(store::RunStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() {
    stop();
}

void ApiServer::routes() {
    auto& s = *server_;

    s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (options_.auth_token.empty()) return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("X-Auth-Token") == options_.auth_token)
            return httplib::Server::HandlerResponse::Unhandled;
        send_error(res, 401, code_name(ErrorCode::Unauthorized), "missing or wrong X-Auth-Token");
        return httplib::Server::HandlerResponse::Handled;
    });

    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, http_status_for(e.code()), code_name(e.code()), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        }
    });

    s.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& r : store_.list_runs()) out.push_back(run_summary(r));
        send_json(res, 200, out);
    });

    s.Get(R"(/runs/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto rec = store_.get_run(req.matches[1]);
        auto out = rec.to_json();
        send_json(res, 200, out);
    });

    s.Get(R"(/runs/([A-Za-z0-9._-]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        std::uint64_t from = 1;
        if (req.has_param("from")) {
            const auto v = text::parse_number(req.get_param_value("from"));
            if (!v || *v < 0 || *v != static_cast<double>(static_cast<std::uint64_t>(*v)))
                fail(ErrorCode::InvalidArgument, "'from' must be a non-negative integer");
            from = static_cast<std::uint64_t>(*v);
        }
        if (!store_.has_run(id)) fail(ErrorCode::UnknownRun, "unknown run '" + id + "'");
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, id, from](std::size_t, httplib::DataSink& sink) {
            store_.stream_events(
                id, from,
                [&](const store::TraceEvent& ev) {
                    const auto frame = sse_frame(ev);
                    return sink.is_writable() && sink.write(frame.data(), frame.size());
                },
                [&] { return stopping_.load() || !sink.is_writable(); });
            if (!stopping_.load() && sink.is_writable()) {
                const auto rec = store_.get_run(id);
                const auto frame = "event: end\ndata: " + dump(rec.state.to_json()) + "\n\n";
                sink.write(frame.data(), frame.size());
            }
            sink.done();
            return true;
        });
    });

    s.Post(R"(/runs/([A-Za-z0-9._-]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) fail(ErrorCode::InvalidArgument, "body must be a JSON object");
        if (!body.contains("text") || !body["text"].is_string()) fail(ErrorCode::InvalidArgument, "'text' is required");
        store::FeedbackMessage msg;
        msg.run_id = req.matches[1];
        msg.author = body.contains("author") && body["author"].is_string() ? body["author"].get<std::string>() : "researcher";
        msg.text = body["text"].get<std::string>();
        if (body.contains("in_reply_to") && !body["in_reply_to"].is_null()) {
            if (!body["in_reply_to"].is_number_unsigned()) fail(ErrorCode::InvalidArgument, "'in_reply_to' must be a seq");
            msg.in_reply_to = body["in_reply_to"].get<std::uint64_t>();
        }
        const auto seq = store_.post_feedback(msg);
        send_json(res, 202, {{"run_id", msg.run_id}, {"seq", seq}, {"delivered", true}});
    });

    s.Post(R"(/runs/([A-Za-z0-9._-]+)/control)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("action") || !body["action"].is_string())
            fail(ErrorCode::InvalidArgument, "body must be {\"action\": \"pause\"|\"resume\"|\"abort\"}");
        const auto action = store::parse_control(body["action"].get<std::string>());
        const std::string id = req.matches[1];
        const auto seq = store_.control(id, action);
        send_json(res, 202, {{"run_id", id}, {"seq", seq}, {"action", store::control_name(action)}});
    });
}

void ApiServer::bind() {
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
        if (port_ <= 0) fail(ErrorCode::InvalidArgument, "cannot bind " + options_.host);
    } else {
        if (!server_->bind_to_port(options_.host, options_.port))
            fail(ErrorCode::InvalidArgument, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
        port_ = options_.port;
    }
}

int ApiServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ApiServer::run() {
    bind();
    server_->listen_after_bind();
}

void ApiServer::stop() {
    stopping_ = true;
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

} // namespace autoresearch::api
