#pragma once
// Internal helpers for the HTTP-backed providers and hubs.
#include "autoresearch/error.hpp"

#include <httplib.h>

#include <chrono>
#include <memory>
#include <string>

namespace autoresearch::detail {

struct BaseUrl {
    std::string origin;      // scheme://host[:port]
    std::string path_prefix; // "" or "/v1" etc., never with a trailing slash
};

inline BaseUrl split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) fail(ErrorCode::InvalidArgument, "base URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    return out;
}

inline std::unique_ptr<httplib::Client> make_client(const BaseUrl& base, std::chrono::seconds timeout) {
    auto client = std::make_unique<httplib::Client>(base.origin);
    client->set_connection_timeout(timeout);
    client->set_read_timeout(timeout);
    client->set_write_timeout(timeout);
    client->set_follow_location(true);
    return client;
}

// 429 and 5xx are worth retrying; other non-2xx statuses are not.
inline bool is_transient_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

} // namespace autoresearch::detail
