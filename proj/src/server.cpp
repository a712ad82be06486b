#include "oasis/error.hpp"
#include "oasis/serve.hpp"

#include "httplib.h"

#include <cstdlib>

namespace oasis::serve {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

void send_error(httplib::Response& res, const Error& e) { send_error(res, http_status(e.code()), code_name(e.code()), e.detail()); }

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

ServerConfig config_from_env(ServerConfig base) {
    base.admin_token = env_or("OASIS_ADMIN_TOKEN", base.admin_token);
    base.host = env_or("OASIS_BIND", base.host);
    return base;
}

struct Server::Impl {
    ServerConfig cfg;
    std::shared_ptr<ModelRegistry> registry;
    std::shared_ptr<NoaaTideSource> noaa;
    httplib::Server http;
    std::thread thread;

    void routes() {
        http.new_task_queue = [n = cfg.threads] { return new httplib::ThreadPool(static_cast<size_t>(std::max(1, n))); };
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                  {"Access-Control-Allow-Headers", "Content-Type, Authorization, X-Admin-Token"},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        http.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        http.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"model_version", registry->current()->version}});
        });

        http.Get("/v1/model", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, model_info(*registry->current()));
        });

        http.Post("/v1/impute", [this](const httplib::Request& req, httplib::Response& res) {
            auto model = registry->current();
            try {
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::exception& e) {
                    throw Error(ErrorCode::MalformedInput, std::string("body is not JSON: ") + e.what());
                }
                send_json(res, 200, to_json(impute_point(request_from_json(body), *model, noaa.get())));
            } catch (const Error& e) {
                send_error(res, e);
            }
        });

        http.Post("/v1/impute/batch", [this](const httplib::Request& req, httplib::Response& res) {
            auto model = registry->current();  // one version for the whole batch
            try {
                if (req.is_multipart_form_data()) {
                    if (!req.has_file("file")) throw Error(ErrorCode::MalformedInput, "multipart upload needs a 'file' part");
                    send_json(res, 200, to_json(impute_batch(req.get_file_value("file").content, *model, noaa.get())));
                    return;
                }
                const auto type = req.get_header_value("Content-Type");
                if (type.find("json") != std::string::npos) {
                    json body;
                    try {
                        body = json::parse(req.body);
                    } catch (const json::exception& e) {
                        throw Error(ErrorCode::MalformedInput, std::string("body is not JSON: ") + e.what());
                    }
                    const json& list = body.is_object() && body.contains("rows") ? body["rows"] : body;
                    if (!list.is_array()) throw Error(ErrorCode::MalformedInput, "expected a JSON array of requests");
                    std::vector<std::optional<ImputeRequest>> rows;
                    std::vector<std::pair<std::string, std::string>> errors;
                    for (const auto& item : list) {
                        try {
                            rows.emplace_back(request_from_json(item));
                            errors.emplace_back();
                        } catch (const Error& e) {
                            rows.emplace_back(std::nullopt);
                            errors.emplace_back(std::string(code_name(e.code())), e.detail());
                        }
                    }
                    send_json(res, 200, to_json(impute_batch(rows, errors, *model, noaa.get())));
                    return;
                }
                send_json(res, 200, to_json(impute_batch(req.body, *model, noaa.get())));
            } catch (const Error& e) {
                send_error(res, e);
            }
        });

        http.Post("/v1/model/swap", [this](const httplib::Request& req, httplib::Response& res) {
            if (cfg.admin_token.empty()) {
                send_error(res, 403, "Forbidden", "model swapping is disabled (no admin token configured)");
                return;
            }
            std::string token = req.get_header_value("X-Admin-Token");
            const auto auth = req.get_header_value("Authorization");
            if (token.empty() && auth.rfind("Bearer ", 0) == 0) token = auth.substr(7);
            if (token != cfg.admin_token) {
                send_error(res, 401, "Unauthorized", "missing or wrong admin token");
                return;
            }
            std::string path;
            try {
                auto body = json::parse(req.body);
                path = body.at("path").get<std::string>();
            } catch (const json::exception&) {
                send_error(res, 400, "MalformedInput", "body must be {\"path\": \"<checkpoint>\"}");
                return;
            }
            const auto old_version = registry->current()->version;
            try {
                const auto v = registry->swap(path);
                send_json(res, 200, {{"model_version", v}, {"previous_version", old_version}});
            } catch (const Error& e) {
                res.status = http_status(e.code());
                res.set_content(json{{"error", {{"code", code_name(e.code())}, {"message", e.detail()}}},
                                     {"model_version", registry->current()->version}}
                                    .dump(),
                                "application/json");
            }
        });

        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const std::exception& e) {
                send_error(res, 500, "InternalError", e.what());
            }
        });

        if (!cfg.static_dir.empty()) http.set_mount_point("/", cfg.static_dir);
    }
};

Server::Server(ServerConfig cfg, std::shared_ptr<ModelRegistry> registry, std::shared_ptr<NoaaTideSource> noaa)
    : impl_(std::make_unique<Impl>()) {
    impl_->cfg = std::move(cfg);
    impl_->registry = std::move(registry);
    impl_->noaa = std::move(noaa);
    impl_->routes();
}

Server::~Server() { stop(); }

int Server::start() {
    if (impl_->cfg.port == 0) {
        port_ = impl_->http.bind_to_any_port(impl_->cfg.host);
    } else {
        port_ = impl_->http.bind_to_port(impl_->cfg.host, impl_->cfg.port) ? impl_->cfg.port : -1;
    }
    if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return port_;
}

void Server::run() {
    if (!impl_->http.listen(impl_->cfg.host, impl_->cfg.port)) {
        throw Error(ErrorCode::IoError, "cannot listen on " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
    }
}

void Server::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace oasis::serve
