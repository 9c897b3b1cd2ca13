#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace sgxp {

/// HTTP front end of a ReviewStore:
///   GET /api/items[?status=S]  -> {"items": [{image_id, status, revision}]}
///   GET /api/items/{id}        -> {image_id, image, mask, status, revision}, PGMs in base64
///   PUT /api/items/{id}        <- {status, mask?, revision?} -> {image_id, status, revision}
/// Errors are {"error": message} (plus "revision" on 409). Until the store directory holds
/// an index every endpoint answers 503.
class ReviewServer {
public:
    explicit ReviewServer(std::filesystem::path store_dir);
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds (port 0 picks a free one) and serves on a background thread. Returns the port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sgxp
