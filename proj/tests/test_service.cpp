#include "doctest.h"

#include "ventsim/datagen/config.hpp"
#include "ventsim/error.hpp"
#include "ventsim/service/server.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cmath>
#include <thread>

using namespace ventsim;
using namespace ventsim::service;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

using C = AsynchronyClass;

// Steps until `pred(frame)` holds or the simulated time passes `limit`.
template <class Pred>
Json run_until(Session& s, double limit, Pred pred)
{
    for (;;) {
        Json f = s.step();
        if (pred(f) || f["t1"].get<double>() > limit) return f;
    }
}

std::vector<BreathLabel> collect_labels(Session& s, double until)
{
    run_until(s, until, [](const Json&) { return false; });
    return s.labels();
}

std::pair<int, Json> request(unsigned short port, http::verb verb, const std::string& target,
                             const std::string& body = "")
{
    asio::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "localhost");
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    beast::error_code ec;
    sock.shutdown(tcp::socket::shutdown_both, ec);
    return {res.result_int(), Json::parse(res.body())};
}

struct StreamClient {
    asio::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};

    StreamClient(unsigned short port, const std::string& id)
    {
        ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
        ws.handshake("localhost", "/sessions/" + id + "/stream");
    }

    Json read()
    {
        beast::flat_buffer b;
        ws.read(b);
        return decode_message(beast::buffers_to_string(b.data()));
    }

    void send(const Json& j) { ws.write(asio::buffer(encode_message(j))); }
};

} // namespace

TEST_SUITE("service")
{
    TEST_CASE("session requests and updates")
    {
        const auto p = parse_session_request(Json{{"archetype", "COPD1"}, {"settings", {{"p_insp", 18}}}});
        CHECK(p.archetype == ArchetypeId::COPD1);
        CHECK(p.settings.p_insp == 18);
        CHECK(p.settings.cycle_fraction == default_profile(ArchetypeId::COPD1).cycle_fraction);
        CHECK_THROWS_AS(parse_session_request(Json{{"archetype", "Asthma"}}), NotFoundError);
        CHECK_THROWS_AS(parse_session_request(Json{{"speed", 8}}), ValidationError);
        CHECK_THROWS_AS(parse_session_request(Json{{"colour", 1}}), ConfigError);

        Session s("x", parse_session_request(Json::object()));
        const Json before = s.describe();
        const Json echo = s.update(Json::object());
        CHECK(echo["params"] == before["params"]);
        CHECK_THROWS_AS(s.update(Json{{"settings", {{"p_insp", 5}, {"peep", 5}}}}), ValidationError);
        CHECK(s.describe()["params"] == before["params"]);
        const Json up = s.update(Json{{"settings", {{"p_insp", 20}}}});
        CHECK(up["params"]["settings"]["p_insp"] == 20.0);
        CHECK(s.describe()["params"]["settings"]["p_insp"] == 20.0);
        CHECK_THROWS_AS(s.inject(C::Normal), ValidationError);
        CHECK_THROWS_AS(s.inject(C::DelayedLate), ValidationError);
    }

    TEST_CASE("wire framing")
    {
        const Json j{{"a", 1}};
        CHECK(encode_message(j) == "7:{\"a\":1}");
        CHECK(decode_message("7:{\"a\":1}") == j);
        CHECK(decode_message("{\"a\":1}") == j);
        CHECK_THROWS_AS(decode_message("9:{\"a\":1}"), ValidationError);
        CHECK_THROWS_AS(decode_message("nope"), ValidationError);
    }

    TEST_CASE("frames are contiguous; pause gives heartbeats")
    {
        Session s("x", parse_session_request(Json::object()));
        double prev = 0;
        std::size_t n = 0;
        for (int i = 0; i < 60; ++i) {
            const Json f = s.step();
            CHECK(f["t0"] == prev);
            CHECK(f["t1"].get<double>() == doctest::Approx(prev + kFrameInterval));
            for (double t : f["samples"]["t"]) {
                CHECK(t > prev - 1e-12);
                CHECK(t <= f["t1"].get<double>() + 1e-12);
            }
            n += f["samples"]["t"].size();
            prev = f["t1"];
        }
        CHECK(n == 301); // t = 0 plus 3 s at 100 Hz
        s.pause();
        const Json hb = s.step();
        CHECK(hb["heartbeat"] == true);
        CHECK(hb["samples"]["t"].empty());
        CHECK(hb["t0"] == hb["t1"]);
        s.resume();
        CHECK(s.step()["samples"]["t"].size() == 5);
    }

    TEST_CASE("injections land on the next breath with the requested label")
    {
        for (C c : {C::IneffectiveEffort, C::LateCycling, C::EarlyCycling, C::DelayedInspiration}) {
            INFO(to_string(c));
            Session s("x", parse_session_request(Json{{"breathing", {{"jitter", 0}}}}));
            run_until(s, 6.0, [](const Json&) { return false; });
            s.inject(c);
            const auto labels = collect_labels(s, 20.0);
            const auto intents = s.intents();
            std::optional<BreathLabel> hit;
            for (const auto& l : labels) {
                if (l.intent == c) hit = l;
            }
            REQUIRE(hit);
            CHECK(hit->cls == c);
            // the injected effort is the first one that began after the request
            CHECK(hit->t_insp_start > 6.0);
            CHECK(hit->t_insp_start < 6.0 + 60.0 / 15.0 + 1e-9);
            if (c == C::IneffectiveEffort) CHECK_FALSE(hit->t_trigger.has_value());
            if (c == C::LateCycling) CHECK(*hit->end_delay_ms > 300);
            std::size_t injected = 0;
            for (auto i : intents) injected += i == c;
            CHECK(injected == 1);
        }
    }

    TEST_CASE("two quick injections mark two consecutive breaths; mid-inspiration applies to the next")
    {
        Session s("x", parse_session_request(Json{{"breathing", {{"jitter", 0}}}}));
        // stop inside an inspiration
        run_until(s, 30.0, [](const Json& f) {
            return f["t1"].get<double>() > 5 && !f["samples"]["phase"].empty() && f["samples"]["phase"].back() == 1;
        });
        const double t_req = s.step()["t1"];
        s.inject(C::LateCycling);
        s.inject(C::LateCycling);
        const auto labels = collect_labels(s, t_req + 20);
        std::vector<std::size_t> idx;
        for (const auto& l : labels) {
            if (l.intent == C::LateCycling) {
                idx.push_back(l.breath_idx);
                CHECK(l.cls == C::LateCycling);
                CHECK(l.t_insp_start > t_req);
            }
        }
        REQUIRE(idx.size() == 2);
        CHECK(idx[1] == idx[0] + 1);
    }

    TEST_CASE("streamed labels equal an offline pass over the same events")
    {
        Session s("x", parse_session_request(Json{{"asynchrony", "default"}, {"seed", 5}}));
        std::vector<Json> streamed;
        for (int i = 0; i < 1200; ++i) {
            const Json f = s.step();
            for (const auto& l : f["labels"]) streamed.push_back(l);
        }
        REQUIRE(streamed.size() > 10);
        const auto intents = s.intents();
        const auto offline = label_breaths(segment_breaths(s.events(), kStreamSegmentation), &intents);
        std::size_t matched = 0;
        for (const auto& j : streamed) {
            for (const auto& l : offline) {
                if (l.breath_idx == j["breath_idx"].get<std::size_t>()) {
                    CHECK(label_json(l) == j);
                    ++matched;
                }
            }
        }
        CHECK(matched == streamed.size());
    }

    TEST_CASE("raising P_insp raises the inspiratory plateau by the same amount")
    {
        Session s("x", parse_session_request(Json{{"breathing", {{"jitter", 0}}}}));
        auto plateau = [&](double from, double to) {
            double peak = -1e9;
            run_until(s, to, [&](const Json& f) {
                const auto& c = f["samples"];
                for (std::size_t i = 0; i < c["t"].size(); ++i) {
                    if (c["t"][i].get<double>() >= from && c["phase"][i] == 1) {
                        peak = std::max(peak, c["paw"][i].get<double>());
                    }
                }
                return false;
            });
            return peak;
        };
        const double before = plateau(8, 20);
        s.update(Json{{"settings", {{"p_insp", 20}}}});
        const Json f = s.step();
        CHECK(f["rev"] == 1);
        const double after = plateau(f["t1"].get<double>() + 4, f["t1"].get<double>() + 16);
        CHECK(after - before == doctest::Approx(5.0).epsilon(0.06));
    }

    TEST_CASE("archetype changes wait for a breath boundary")
    {
        Session s("x", parse_session_request(Json::object()));
        run_until(s, 30.0, [](const Json& f) {
            return f["t1"].get<double>() > 5 && !f["samples"]["phase"].empty() && f["samples"]["phase"].back() == 1;
        });
        const Json ack = s.update(Json{{"archetype", "ARDS3"}});
        CHECK(ack["params"]["archetype"] == "ARDS3");
        CHECK(ack["params"]["settings"]["cycle_fraction"] ==
              default_profile(ArchetypeId::ARDS3).cycle_fraction);
        Json f = s.step();
        CHECK(f["archetype"] == "Healthy"); // mid-inspiration: not yet
        f = run_until(s, 30.0, [](const Json& x) { return x["archetype"] == "ARDS3"; });
        REQUIRE(f["archetype"] == "ARDS3");
        const Json next = s.step();
        CHECK(next["samples"]["phase"].front() == 0);
    }

    TEST_CASE("slow subscribers are dropped without stalling the loop")
    {
        auto p = parse_session_request(Json::object());
        Session s("x", p);
        auto slow = s.subscribe(5);
        auto fast = s.subscribe(1000);
        s.start();
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        CHECK(slow->closed());
        CHECK(slow->close_reason() == "slow consumer");
        CHECK_FALSE(fast->closed());
        std::size_t n = 0;
        while (fast->pop(std::chrono::milliseconds(0))) ++n;
        CHECK(n >= 9); // the loop kept producing
        s.stop();
        CHECK(fast->closed());
    }

    TEST_CASE("http routing")
    {
        Registry reg;
        auto r = handle_request(reg, "GET", "/archetypes", "");
        CHECK(r.status == 200);
        CHECK(r.body["archetypes"].size() == 9);
        CHECK(r.body["archetypes"][0].contains("default_effort"));
        r = handle_request(reg, "POST", "/sessions", R"({"archetype": "Fibrosis"})");
        REQUIRE(r.status == 201);
        const std::string id = r.body["id"];
        CHECK(r.body["params"]["archetype"] == "Fibrosis");
        CHECK(handle_request(reg, "GET", "/sessions/" + id, "").body["id"] == id);
        r = handle_request(reg, "PATCH", "/sessions/" + id, R"({"settings": {"p_insp": 5}})");
        CHECK(r.status == 400);
        CHECK(r.body["error"]["code"] == "validation");
        r = handle_request(reg, "POST", "/sessions/" + id + "/inject", R"({"class": "XX"})");
        CHECK(r.status == 400);
        r = handle_request(reg, "POST", "/sessions/" + id + "/inject", R"({"class": "IE"})");
        CHECK(r.status == 200);
        CHECK(handle_request(reg, "POST", "/sessions", R"({"archetype": "Asthma"})").status == 404);
        CHECK(handle_request(reg, "POST", "/sessions", "{oops").status == 400);
        CHECK(handle_request(reg, "GET", "/sessions/nope", "").status == 404);
        CHECK(handle_request(reg, "GET", "/nowhere", "").status == 404);
        CHECK(handle_request(reg, "PUT", "/sessions", "").status == 405);
        CHECK(handle_request(reg, "DELETE", "/sessions/" + id, "").status == 200);
        CHECK(handle_request(reg, "GET", "/sessions/" + id, "").status == 404);
    }

    TEST_CASE("live stream over the socket")
    {
        Server server(0);
        server.start();
        const auto port = server.port();

        auto [st, created] = request(port, http::verb::post, "/sessions", R"({"archetype": "Healthy"})");
        REQUIRE(st == 201);
        auto [st2, other] = request(port, http::verb::post, "/sessions", R"({"archetype": "COPD2"})");
        REQUIRE(st2 == 201);
        CHECK(request(port, http::verb::get, "/archetypes").second["archetypes"].size() == 9);

        const auto t_open = Clock::now();
        StreamClient a(port, created["id"]);
        StreamClient b(port, other["id"]);
        Json first = a.read();
        const double first_ms = std::chrono::duration<double, std::milli>(Clock::now() - t_open).count();
        CHECK(first_ms < 500);
        CHECK(first["session"] == created["id"]);

        // 10 s of frames on a, with an update in the middle and b read alongside
        const auto t0 = Clock::now();
        int frames = 1, b_frames = 0;
        double prev_t1 = first["t1"];
        bool contiguous = true, cross_talk = false;
        std::optional<Clock::time_point> update_sent;
        std::optional<double> update_latency_ms;
        std::uint64_t want_rev = 0;
        while (Clock::now() - t0 < std::chrono::seconds(10)) {
            const Json f = a.read();
            ++frames;
            contiguous = contiguous && f["t0"] == prev_t1;
            prev_t1 = f["t1"];
            cross_talk = cross_talk || f["session"] != created["id"];
            if (!update_sent && Clock::now() - t0 > std::chrono::seconds(4)) {
                update_sent = Clock::now();
                auto [s3, ack] = request(port, http::verb::patch, "/sessions/" + created["id"].get<std::string>(),
                                         R"({"settings": {"p_insp": 17}})");
                CHECK(s3 == 200);
                want_rev = ack["rev"];
            }
            if (update_sent && !update_latency_ms && f["rev"].get<std::uint64_t>() >= want_rev && want_rev > 0) {
                update_latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - *update_sent).count();
            }
            while (b.ws.next_layer().available() > 0) {
                const Json g = b.read();
                ++b_frames;
                cross_talk = cross_talk || g["session"] != other["id"];
            }
        }
        const double elapsed = std::chrono::duration<double>(Clock::now() - t_open).count();
        INFO("frames " << frames << " over " << elapsed << " s");
        CHECK(std::abs(frames - 20.0 * elapsed) <= 3.0);
        CHECK(contiguous);
        CHECK_FALSE(cross_talk);
        CHECK(b_frames > 100);
        REQUIRE(update_latency_ms);
        CHECK(*update_latency_ms < 500);

        // control over the socket, and a rejected update leaves the stream alone
        a.send(Json{{"type", "update"}, {"id", 7}, {"params", {{"settings", {{"p_insp", 5}}}}}});
        Json reply;
        for (int i = 0; i < 40; ++i) {
            reply = a.read();
            if (reply["type"] != "frame") break;
        }
        CHECK(reply["type"] == "error");
        CHECK(reply["id"] == 7);
        CHECK(request(port, http::verb::get, "/sessions/" + created["id"].get<std::string>()).second["params"]["settings"]["p_insp"] == 17.0);

        CHECK(request(port, http::verb::post, "/sessions/" + created["id"].get<std::string>() + "/pause").first == 200);
        bool heartbeat = false;
        for (int i = 0; i < 10 && !heartbeat; ++i) heartbeat = a.read().value("heartbeat", false);
        CHECK(heartbeat);

        CHECK(request(port, http::verb::get, "/sessions/zzz").first == 404);
        server.stop();
    }
}
