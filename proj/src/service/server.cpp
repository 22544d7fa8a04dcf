#include "ventsim/service/server.hpp"

#include "ventsim/datagen/config.hpp"
#include "ventsim/error.hpp"
#include "ventsim/model/archetype.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <regex>

namespace ventsim::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

std::shared_ptr<Session> Registry::create(const Json& request)
{
    const SessionParams params = parse_session_request(request);
    std::shared_ptr<Session> s;
    {
        std::lock_guard l(m_);
        const std::string id = "s" + std::to_string(next_id_++);
        s = std::make_shared<Session>(id, params);
        sessions_[id] = s;
    }
    s->start();
    return s;
}

std::shared_ptr<Session> Registry::find(const std::string& id) const
{
    std::lock_guard l(m_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
    return it->second;
}

bool Registry::remove(const std::string& id)
{
    std::shared_ptr<Session> s;
    {
        std::lock_guard l(m_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) return false;
        s = it->second;
        sessions_.erase(it);
    }
    s->stop();
    return true;
}

Json Registry::list() const
{
    std::lock_guard l(m_);
    Json arr = Json::array();
    for (const auto& [id, s] : sessions_) arr.push_back(s->describe());
    return Json{{"sessions", arr}};
}

void Registry::clear()
{
    std::map<std::string, std::shared_ptr<Session>> all;
    {
        std::lock_guard l(m_);
        all.swap(sessions_);
    }
    for (auto& [id, s] : all) s->stop();
}

namespace {

Json error_body(std::string_view code, const std::string& message)
{
    return Json{{"error", Json{{"code", code}, {"message", message}}}};
}

Json parse_body(const std::string& body)
{
    if (body.empty()) return Json::object();
    return Json::parse(body); // parse_error mapped by the caller
}

AsynchronyClass parse_injectable(const Json& j)
{
    if (!j.is_object() || !j.contains("class") || !j["class"].is_string()) {
        throw ValidationError("expected {\"class\": \"EC\" | \"LC\" | \"DI\" | \"IE\"}");
    }
    const auto c = parse_asynchrony_class(j["class"].get<std::string>());
    if (!c) throw ValidationError("unknown asynchrony class '" + j["class"].get<std::string>() + "'");
    return *c;
}

} // namespace

HttpResponse handle_request(Registry& reg, const std::string& method, const std::string& target,
                            const std::string& body)
{
    static const std::regex session_re(R"(^/sessions/([A-Za-z0-9_-]+)(/(params|inject|pause|resume))?$)");
    const std::string path = target.substr(0, target.find('?'));
    try {
        if (path == "/archetypes") {
            if (method != "GET") return {405, error_body("method_not_allowed", "use GET")};
            Json out = catalog_json();
            for (auto& a : out["archetypes"]) {
                const auto prof = default_profile(*parse_archetype(a["name"].get<std::string>()));
                a["default_effort"] = effort_json(prof.effort);
                a["default_cycle_fraction"] = prof.cycle_fraction;
            }
            return {200, out};
        }
        if (path == "/sessions") {
            if (method == "GET") return {200, reg.list()};
            if (method == "POST") return {201, reg.create(parse_body(body))->describe()};
            return {405, error_body("method_not_allowed", "use GET or POST")};
        }
        std::smatch m;
        if (std::regex_match(path, m, session_re)) {
            const std::string id = m[1];
            const std::string action = m[3];
            if (action.empty()) {
                if (method == "GET") return {200, reg.find(id)->describe()};
                if (method == "DELETE") {
                    if (!reg.remove(id)) throw NotFoundError("no session '" + id + "'");
                    return {200, Json{{"deleted", id}}};
                }
                if (method == "PATCH") return {200, reg.find(id)->update(parse_body(body))};
                return {405, error_body("method_not_allowed", "use GET, PATCH or DELETE")};
            }
            if (method != "POST" && !(action == "params" && method == "PATCH")) {
                return {405, error_body("method_not_allowed", "use POST")};
            }
            const auto s = reg.find(id);
            if (action == "params") return {200, s->update(parse_body(body))};
            if (action == "inject") return {200, s->inject(parse_injectable(parse_body(body)))};
            if (action == "pause") s->pause();
            if (action == "resume") s->resume();
            return {200, s->describe()};
        }
        return {404, error_body("not_found", "no route " + path)};
    } catch (const NotFoundError& e) {
        return {404, error_body("not_found", e.what())};
    } catch (const ConfigError& e) {
        return {400, error_body("validation", e.what())};
    } catch (const ValidationError& e) {
        return {400, error_body("validation", e.what())};
    } catch (const Json::exception& e) {
        return {400, error_body("bad_request", e.what())};
    } catch (const Error& e) {
        return {500, error_body("internal", e.what())};
    }
}

// ---------------------------------------------------------------------------

struct Server::Impl {
    asio::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::thread accept_thread;
    std::atomic<bool> stopping{false};
    std::mutex m;
    std::list<std::shared_ptr<tcp::socket>> sockets;
    std::list<std::thread> threads;
    Registry* registry = nullptr;

    void accept_loop();
    void serve(std::shared_ptr<tcp::socket> sock);
    void serve_stream(tcp::socket& sock, http::request<http::string_body>& req, const std::string& id);
};

namespace {

Json control_reply(Session& s, const Json& msg)
{
    Json reply{{"type", "ack"}};
    if (msg.contains("id")) reply["id"] = msg["id"];
    try {
        const std::string type = msg.value("type", "");
        if (type == "update") reply["result"] = s.update(msg.value("params", Json::object()));
        else if (type == "inject") reply["result"] = s.inject(parse_injectable(msg));
        else if (type == "pause") s.pause();
        else if (type == "resume") s.resume();
        else throw ValidationError("unknown message type '" + type + "'");
    } catch (const Error& e) {
        reply["type"] = "error";
        reply["code"] = dynamic_cast<const NotFoundError*>(&e) ? "not_found" : "validation";
        reply["message"] = e.what();
    } catch (const Json::exception& e) {
        reply["type"] = "error";
        reply["code"] = "bad_request";
        reply["message"] = e.what();
    }
    return reply;
}

} // namespace

void Server::Impl::serve_stream(tcp::socket& sock, http::request<http::string_body>& req,
                                const std::string& id)
{
    std::shared_ptr<Session> session;
    try {
        session = registry->find(id);
    } catch (const NotFoundError& e) {
        http::response<http::string_body> res{http::status::not_found, req.version()};
        res.set(http::field::content_type, "application/json");
        res.body() = error_body("not_found", e.what()).dump();
        res.prepare_payload();
        beast::error_code ec;
        http::write(sock, res, ec);
        return;
    }
    websocket::stream<tcp::socket&> ws{sock};
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    // subscribing after the handshake: the stream starts at the live edge
    const auto sub = session->subscribe();
    while (!stopping) {
        if (auto msg = sub->pop(std::chrono::milliseconds(20))) {
            ws.write(asio::buffer(*msg), ec);
            if (ec) return;
        } else if (sub->closed()) {
            ws.close(websocket::close_reason(websocket::close_code::policy_error, sub->close_reason()), ec);
            return;
        }
        if (sock.available(ec) > 0) {
            beast::flat_buffer in;
            ws.read(in, ec);
            if (ec) {
                sub->close("client closed");
                return;
            }
            Json reply;
            try {
                reply = control_reply(*session, decode_message(beast::buffers_to_string(in.data())));
            } catch (const ValidationError& e) {
                reply = Json{{"type", "error"}, {"code", "bad_request"}, {"message", e.what()}};
            }
            sub->push_reply(encode_message(reply));
        }
    }
}

void Server::Impl::serve(std::shared_ptr<tcp::socket> sock)
{
    beast::flat_buffer buf;
    beast::error_code ec;
    while (!stopping) {
        http::request<http::string_body> req;
        http::read(*sock, buf, req, ec);
        if (ec) break;
        const std::string target(req.target());
        if (websocket::is_upgrade(req)) {
            static const std::regex stream_re(R"(^/sessions/([A-Za-z0-9_-]+)/stream$)");
            std::smatch m;
            if (std::regex_match(target, m, stream_re)) {
                serve_stream(*sock, req, m[1]);
                break;
            }
        }
        const HttpResponse r = handle_request(*registry, std::string(req.method_string()), target, req.body());
        http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
        res.set(http::field::content_type, "application/json");
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(req.keep_alive());
        res.body() = r.body.dump();
        res.prepare_payload();
        http::write(*sock, res, ec);
        if (ec || !req.keep_alive()) break;
    }
    sock->shutdown(tcp::socket::shutdown_both, ec);
}

void Server::Impl::accept_loop()
{
    while (!stopping) {
        auto sock = std::make_shared<tcp::socket>(ioc);
        beast::error_code ec;
        acceptor.accept(*sock, ec);
        if (stopping) break;
        if (ec) continue;
        std::lock_guard l(m);
        sockets.push_back(sock);
        threads.emplace_back([this, sock] { serve(sock); });
    }
}

Server::Server(unsigned short port) : impl_(std::make_unique<Impl>())
{
    impl_->registry = &registry_;
    const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
    port_ = impl_->acceptor.local_endpoint().port();
}

Server::~Server() { stop(); }

void Server::start()
{
    if (impl_->accept_thread.joinable()) return;
    impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop()
{
    if (impl_->stopping.exchange(true)) return;
    if (impl_->accept_thread.joinable()) {
        // a blocking accept only returns on a connection
        beast::error_code ec;
        tcp::socket wake(impl_->ioc);
        wake.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port_), ec);
        impl_->accept_thread.join();
    }
    beast::error_code ec;
    impl_->acceptor.close(ec);
    registry_.clear();
    std::list<std::thread> threads;
    {
        std::lock_guard l(impl_->m);
        for (auto& s : impl_->sockets) s->shutdown(tcp::socket::shutdown_both, ec);
        threads.swap(impl_->threads);
    }
    for (auto& t : threads) t.join();
}

} // namespace ventsim::service
