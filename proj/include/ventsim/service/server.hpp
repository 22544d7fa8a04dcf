#pragma once

#include "ventsim/service/session.hpp"

#include <atomic>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace ventsim::service {

/// Live sessions by id.
class Registry {
public:
    std::shared_ptr<Session> create(const Json& request); // starts the session loop
    std::shared_ptr<Session> find(const std::string& id) const; // NotFoundError
    bool remove(const std::string& id);
    Json list() const;
    void clear();

private:
    mutable std::mutex m_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

struct HttpResponse {
    int status = 200;
    Json body;
};

/// Routes one request without any networking; the server and the tests share it.
HttpResponse handle_request(Registry& reg, const std::string& method, const std::string& target,
                            const std::string& body);

/// Blocking HTTP/1.1 + WebSocket server on 127.0.0.1, one thread per
/// connection.
class Server {
public:
    explicit Server(unsigned short port = 0); // 0 picks a free port
    ~Server();

    void start();
    void stop();
    unsigned short port() const { return port_; }
    Registry& registry() { return registry_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    unsigned short port_ = 0;
    Registry registry_;
};

} // namespace ventsim::service
