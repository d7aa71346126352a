#include <gtest/gtest.h>

#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "evcorridor/serve.hpp"
#include "evcorridor/wire.hpp"
#include "evcorridor/ws_server.hpp"

using namespace evc;
using nlohmann::json;

namespace {

ModelConfig serve_cfg() {
    ModelConfig c;
    c.d = 16;
    c.layers = 1;
    c.heads = 2;
    c.context = 5;
    c.ffn_hidden = 32;
    c.dropout = 0.0f;
    return c;
}

std::string type_of(const std::string& line) { return json::parse(line).at("type").get<std::string>(); }

ServeConfig base_config() {
    ServeConfig sc;
    sc.seed = 11;
    sc.targets.g_star = 0.0;
    return sc;
}

}  // namespace

TEST(Wire, RoundTripEveryType) {
    wire::ScenarioInfo si;
    si.scenario = json{{"id", "grid4x4"}};
    si.rows = si.cols = 4;
    si.cells_per_link = 4;
    si.num_cells = 192;
    si.n_max = 11;
    si.route = {0, 1, 2};
    si.links = {{0, 1, 2, 0}};
    wire::Snapshot sn;
    sn.t = 3;
    sn.densities = {1.5, 0.0};
    sn.phases = {0, 2};
    sn.ctg = 12.0;
    sn.acd = 3.25;
    wire::Metrics me;
    me.ett_s = 70;
    me.intersection_delay_s = {1, 2};
    wire::Control rate{wire::ControlKind::Rate, std::nullopt, 4.0};
    wire::Control reset{wire::ControlKind::Reset, 9, std::nullopt};
    std::vector<wire::Message> msgs{wire::Hello{1, "evcorridor", "dt"}, si, sn, wire::SetTarget{-200.0, -5.0},
                                    rate, reset, me, wire::Bye{"done"}, wire::Error{"x"}};
    for (const auto& m : msgs) {
        std::string s = wire::serialize(m);
        wire::Message back = wire::parse(s);
        EXPECT_EQ(back.index(), m.index());
        EXPECT_EQ(wire::serialize(back), s);
    }
    auto st = std::get<wire::SetTarget>(wire::parse(R"({"type":"set_target","g_star":-400,"extra":1})"));
    EXPECT_EQ(st.g_star, -400.0);
    EXPECT_FALSE(st.c_star.has_value());
}

TEST(Wire, MalformedInputIsRejected) {
    for (const char* bad : {"not json", "[1,2]", "{}", R"({"type":"nope"})", R"({"type":"set_target"})",
                            R"({"type":"set_target","g_star":"high"})", R"({"type":"control","action":"rate"})",
                            R"({"type":"control","action":"jump"})", R"({"type":"control","action":"rate","rate":-1})",
                            R"({"type":"snapshot","t":"x"})"})
        EXPECT_THROW(wire::parse(bad), std::invalid_argument) << bad;
}

TEST(Session, ConnectAndStep) {
    Model<float> m(serve_cfg(), 1);
    ServeSession s(base_config(), &m);
    auto hello = s.on_connect();
    ASSERT_EQ(hello.lines.size(), 3u);
    EXPECT_EQ(type_of(hello.lines[0]), "hello");
    EXPECT_EQ(type_of(hello.lines[1]), "scenario");
    EXPECT_EQ(type_of(hello.lines[2]), "snapshot");
    auto scen = std::get<wire::ScenarioInfo>(wire::parse(hello.lines[1]));
    EXPECT_EQ(scen.num_cells, 192);
    EXPECT_EQ(scen.links.size(), 48u);

    EXPECT_TRUE(s.tick().lines.empty());
    s.on_message(R"({"type":"control","action":"start"})");
    auto r = s.tick();
    ASSERT_EQ(r.lines.size(), 1u);
    auto snap = std::get<wire::Snapshot>(wire::parse(r.lines[0]));
    EXPECT_EQ(snap.t, 1);
    EXPECT_EQ(snap.densities.size(), 192u);
}

TEST(Session, SetTargetAppliesAtNextStep) {
    Model<float> m(serve_cfg(), 1);
    ServeSession s(base_config(), &m);
    s.on_connect();
    s.on_message(R"({"type":"control","action":"start"})");
    for (int i = 0; i < 10; ++i) s.tick();
    const double remaining = s.env().ev_remaining_m();
    auto rep = s.on_message(R"({"type":"set_target","g_star":-400})");
    EXPECT_TRUE(rep.lines.empty());
    EXPECT_EQ(s.snapshot().g_star, 0.0);
    auto snap = std::get<wire::Snapshot>(wire::parse(s.tick().lines.at(0)));
    EXPECT_EQ(snap.g_star, -400.0);
    EXPECT_NEAR(snap.rtg_anchor, -400.0 + remaining + 10.0, 1e-9);
    EXPECT_NEAR(snap.accrued, snap.reward, 1e-9);
    EXPECT_NEAR(snap.rtg, snap.rtg_anchor - snap.accrued, 1e-9);
}

TEST(Session, MalformedMessageKeepsRunning) {
    Model<float> m(serve_cfg(), 1);
    ServeSession s(base_config(), &m);
    s.on_message(R"({"type":"control","action":"start"})");
    s.tick();
    auto rep = s.on_message("{oops");
    ASSERT_EQ(rep.lines.size(), 1u);
    EXPECT_EQ(type_of(rep.lines[0]), "error");
    EXPECT_FALSE(rep.close);
    EXPECT_TRUE(s.running());
    EXPECT_EQ(std::get<wire::Snapshot>(wire::parse(s.tick().lines.at(0))).t, 2);
    EXPECT_EQ(type_of(s.on_message(R"({"type":"metrics"})").lines.at(0)), "error");
}

TEST(Session, ReplayIsDeterministic) {
    Model<float> m(serve_cfg(), 1);
    auto run = [&] {
        ServeSession s(base_config(), &m);
        std::vector<std::string> out;
        s.on_message(R"({"type":"control","action":"start"})");
        for (int i = 0; i < 40; ++i) {
            if (i == 10) s.on_message(R"({"type":"set_target","g_star":-200})");
            for (auto& l : s.tick().lines) out.push_back(l);
        }
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Session, RunsToMetricsAndResets) {
    ServeSession s(base_config(), nullptr);
    s.on_message(R"({"type":"control","action":"start"})");
    std::string last;
    for (int i = 0; i < 300 && s.running(); ++i)
        for (auto& l : s.tick().lines) last = l;
    EXPECT_FALSE(s.running());
    auto met = std::get<wire::Metrics>(wire::parse(last));
    EXPECT_EQ(met.ett_s, s.env().metrics().ett_s);
    // Baseline mode keeps the same bookkeeping.
    auto snap = s.snapshot();
    EXPECT_NEAR(snap.rtg, snap.rtg_anchor - snap.accrued, 1e-9);

    auto rep = s.on_message(R"({"type":"control","action":"reset","seed":3})");
    ASSERT_EQ(rep.lines.size(), 2u);
    EXPECT_EQ(std::get<wire::ScenarioInfo>(wire::parse(rep.lines[0])).seed, 3u);
    EXPECT_EQ(std::get<wire::Snapshot>(wire::parse(rep.lines[1])).t, 0);
    EXPECT_FALSE(s.running());
    EXPECT_TRUE(s.on_message(R"({"type":"bye"})").close);
}

TEST(WebSocket, ConsoleRoundTrip) {
    namespace beast = boost::beast;
    namespace asio = boost::asio;
    using tcp = asio::ip::tcp;

    Model<float> m(serve_cfg(), 1);
    ServeConfig cfg = base_config();
    cfg.rate = 200.0;
    ServeSession session(cfg, &m);
    WsServer server(session, "127.0.0.1", 0);
    const auto port = server.port();
    std::thread th([&] { server.run(); });

    asio::io_context ioc;
    auto open = [&](beast::websocket::stream<tcp::socket>& ws) {
        tcp::resolver res(ioc);
        asio::connect(ws.next_layer(), res.resolve("127.0.0.1", std::to_string(port)));
        ws.handshake("127.0.0.1", "/");
    };
    auto read = [](beast::websocket::stream<tcp::socket>& ws) {
        beast::flat_buffer buf;
        ws.read(buf);
        return beast::buffers_to_string(buf.data());
    };

    beast::websocket::stream<tcp::socket> ws(ioc);
    open(ws);
    EXPECT_EQ(type_of(read(ws)), "hello");
    EXPECT_EQ(type_of(read(ws)), "scenario");
    EXPECT_EQ(type_of(read(ws)), "snapshot");

    // A second console is turned away.
    {
        beast::websocket::stream<tcp::socket> ws2(ioc);
        open(ws2);
        EXPECT_EQ(type_of(read(ws2)), "error");
    }

    ws.write(asio::buffer(std::string(R"({"type":"control","action":"start"})")));
    int t = 0;
    while (t < 10) {
        auto line = read(ws);
        if (type_of(line) == "snapshot") t = json::parse(line).at("t").get<int>();
    }
    ws.write(asio::buffer(std::string(R"({"type":"set_target","g_star":-400})")));
    ws.write(asio::buffer(std::string("garbage")));
    bool saw_error = false, saw_target = false;
    for (int i = 0; i < 400 && !(saw_error && saw_target); ++i) {
        auto j = json::parse(read(ws));
        if (j["type"] == "error") saw_error = true;
        if (j["type"] == "snapshot" && j["g_star"] == -400.0) {
            saw_target = true;
            EXPECT_NEAR(j["rtg"].get<double>(), j["rtg_anchor"].get<double>() - j["accrued"].get<double>(), 1e-9);
        }
    }
    EXPECT_TRUE(saw_error);
    EXPECT_TRUE(saw_target);

    ws.write(asio::buffer(std::string(R"({"type":"bye"})")));
    std::string last;
    beast::error_code ec;
    for (int i = 0; i < 400; ++i) {
        beast::flat_buffer buf;
        ws.read(buf, ec);
        if (ec) break;
        last = beast::buffers_to_string(buf.data());
    }
    EXPECT_EQ(type_of(last), "bye");
    EXPECT_EQ(ec, beast::websocket::error::closed);

    server.stop();
    th.join();
    EXPECT_FALSE(session.running());
}
