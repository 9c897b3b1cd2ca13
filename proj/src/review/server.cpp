#include "sgxp/review/server.hpp"

#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sgxp/core/errors.hpp"
#include "sgxp/review/store.hpp"

namespace sgxp {
namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message,
                 std::optional<std::uint64_t> revision = std::nullopt) {
    nlohmann::json body = {{"error", message}};
    if (revision) body["revision"] = *revision;
    reply(res, status, body);
}

}  // namespace

struct ReviewServer::Impl {
    std::filesystem::path dir;
    std::unique_ptr<ReviewStore> store;
    std::mutex open_mutex;
    httplib::Server http;
    std::thread thread;

    ReviewStore& opened() {
        std::lock_guard lock(open_mutex);
        if (!store) store = std::make_unique<ReviewStore>(dir);  // throws 503 while uninitialized
        return *store;
    }

    // Maps store and argument failures onto status codes.
    template <typename F>
    void guarded(httplib::Response& res, F&& body) {
        try {
            body();
        } catch (const ReviewError& e) {
            reply_error(res, e.status(), e.what(), e.revision());
        } catch (const nlohmann::json::exception& e) {
            reply_error(res, 400, std::string("bad request body: ") + e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    }

    void routes() {
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                  {"Access-Control-Allow-Methods", "GET, PUT, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
        http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        http.Get("/api/items", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto& store = opened();
                std::optional<ReviewStatus> status;
                if (req.has_param("status")) {
                    try {
                        status = parse_review_status(req.get_param_value("status"));
                    } catch (const ArgumentError& e) {
                        throw ReviewError(400, e.what());
                    }
                }
                nlohmann::json items = nlohmann::json::array();
                for (const auto& item : store.list(status)) {
                    items.push_back({{"image_id", item.image_id},
                                     {"status", to_string(item.status)},
                                     {"revision", item.revision}});
                }
                reply(res, 200, {{"items", items}});
            });
        });

        http.Get(R"(/api/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto& store = opened();
                const std::string id = req.matches[1];
                const ReviewItem item = store.item(id);
                reply(res, 200,
                      {{"image_id", item.image_id},
                       {"image", base64_encode(store.image_bytes(id))},
                       {"mask", base64_encode(store.mask_bytes(id))},
                       {"status", to_string(item.status)},
                       {"revision", item.revision}});
            });
        });

        http.Put(R"(/api/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto& store = opened();
                const std::string id = req.matches[1];
                const auto body = nlohmann::json::parse(req.body);
                if (!body.is_object() || !body.contains("status")) throw ReviewError(400, "body needs a status");
                ReviewUpdate update;
                try {
                    update.status = parse_review_status(body.at("status").get<std::string>());
                } catch (const ArgumentError& e) {
                    throw ReviewError(400, e.what());
                }
                if (body.contains("revision") && !body.at("revision").is_null()) {
                    update.base_revision = body.at("revision").get<std::uint64_t>();
                }
                if (body.contains("mask") && !body.at("mask").is_null()) {
                    try {
                        update.mask = base64_decode(body.at("mask").get<std::string>());
                    } catch (const ArgumentError& e) {
                        throw ReviewError(422, std::string("mask is not base64: ") + e.what());
                    }
                }
                const auto revision = store.update(id, update);
                reply(res, 200, {{"image_id", id}, {"status", to_string(update.status)}, {"revision", revision}});
            });
        });
    }
};

ReviewServer::ReviewServer(std::filesystem::path store_dir) : impl_(std::make_unique<Impl>()) {
    impl_->dir = std::move(store_dir);
    impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return bound;
}

void ReviewServer::run(const std::string& host, int port) {
    if (!impl_->http.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void ReviewServer::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace sgxp
