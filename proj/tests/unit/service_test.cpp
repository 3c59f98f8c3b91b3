#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "ms/harness.hpp"
#include "ms/service.hpp"

namespace {

using namespace ms;
using namespace ms::service;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct Reply {
  int status = 0;
  std::string body;
  json j() const { return json::parse(body); }
};

class LiveServer {
 public:
  explicit LiveServer(ServerOptions o = {}) {
    o.port = 0;
    server_ = std::make_unique<Server>(std::move(o));
    thread_ = std::thread([this] { server_->run(); });
  }
  ~LiveServer() {
    server_->stop();
    thread_.join();
  }
  int port() const { return server_->port(); }
  SessionManager& sessions() { return server_->sessions(); }

  Reply request(http::verb verb, const std::string& target, const std::string& body = {}) {
    asio::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect({asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port())});
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "localhost");
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    beast::error_code ignored;
    sock.shutdown(tcp::socket::shutdown_both, ignored);
    return {static_cast<int>(res.result_int()), res.body()};
  }
  Reply post(const std::string& target, const json& body) { return request(http::verb::post, target, body.dump()); }
  Reply get(const std::string& target) { return request(http::verb::get, target); }

 private:
  std::unique_ptr<Server> server_;
  std::thread thread_;
};

TEST(Base64, KnownVectorsAndRoundTrip) {
  auto enc = [](const std::string& s) {
    return base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  EXPECT_ANY_THROW(base64_decode("abc"));
  EXPECT_ANY_THROW(base64_decode("ab!="));
}

TEST(DepthPng, RoundTripsAtTenthMillimetre) {
  const auto w = world::init_heap(BinConfig{}, 8, 3);
  const auto cam = perception::CameraModel::for_bin(w.config);
  const auto r = perception::render(w, cam);
  const auto png = encode_depth_png(r.depth);
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png[1], 'P');
  const auto back = decode_depth_png(png);
  ASSERT_EQ(back.rows(), r.depth.rows());
  ASSERT_EQ(back.cols(), r.depth.cols());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back.values()[i], r.depth.values()[i], kDepthUnit / 2 + 1e-12);
}

std::set<std::array<int, 2>> boundary_oracle(const Mask& m) {
  std::set<std::array<int, 2>> out;
  for (int v = 0; v < m.rows(); ++v)
    for (int u = 0; u < m.cols(); ++u) {
      if (!m(v, u)) continue;
      bool edge = false;
      for (auto [dv, du] : {std::pair{-1, 0}, std::pair{1, 0}, std::pair{0, -1}, std::pair{0, 1}})
        if (!m.in_bounds(v + dv, u + du) || !m(v + dv, u + du)) edge = true;
      if (edge) out.insert({u, v});
    }
  return out;
}

TEST(Outlines, SinglePixelAndRectangle) {
  Mask m(10, 10, 0);
  m(4, 5) = 1;
  auto o = mask_outlines(m);
  ASSERT_EQ(o.size(), 1u);
  EXPECT_EQ(o[0], (Outline{{5, 4}}));

  Mask r(10, 10, 0);
  for (int v = 2; v < 5; ++v)
    for (int u = 3; u < 7; ++u) r(v, u) = 1;
  o = mask_outlines(r);
  ASSERT_EQ(o.size(), 1u);
  // clockwise on screen (v grows downward): right along the top edge first
  EXPECT_EQ(o[0].front(), (std::array<int, 2>{3, 2}));
  EXPECT_EQ(o[0][1], (std::array<int, 2>{4, 2}));
  EXPECT_EQ(o[0].size(), 10u);
  const std::set<std::array<int, 2>> traced(o[0].begin(), o[0].end());
  EXPECT_EQ(traced, boundary_oracle(r));
}

TEST(Outlines, DiscsMatchBoundaryOracle) {
  Mask m(60, 80, 0);
  auto disc = [&](int cu, int cv, int rad) {
    for (int v = 0; v < m.rows(); ++v)
      for (int u = 0; u < m.cols(); ++u)
        if ((u - cu) * (u - cu) + (v - cv) * (v - cv) <= rad * rad) m(v, u) = 1;
  };
  disc(20, 20, 9);
  disc(55, 35, 12);
  disc(79, 0, 4);  // touching the image corner
  const auto o = mask_outlines(m);
  ASSERT_EQ(o.size(), 3u);
  std::set<std::array<int, 2>> traced;
  for (const auto& path : o) traced.insert(path.begin(), path.end());
  EXPECT_EQ(traced, boundary_oracle(m));
}

TEST(SessionConfig, Validation) {
  const auto c = SessionConfig::from_json({{"seed", 5}, {"heap_size", 3}});
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.heap_size, 3);
  EXPECT_EQ(c.action_cap, 25);
  EXPECT_THROW(SessionConfig::from_json({{"heap_size", 0}}), ServiceError);
  EXPECT_THROW(SessionConfig::from_json({{"action_cap", 26}}), ServiceError);
  EXPECT_THROW(SessionConfig::from_json({{"push", "magic"}}), ServiceError);
  EXPECT_THROW(SessionConfig::from_json(json::array()), ServiceError);
}

TEST(ParseAction, WireForms) {
  EXPECT_EQ(episode::kind_of(parse_action({{"type", "skip"}})), primitives::AspAction::skip);
  const auto g = std::get<episode::GraspAction>(parse_action({{"type", "grasp"}, {"object_id", 4}}));
  EXPECT_EQ(g.object_id, 4);
  const auto p = std::get<episode::PushAction>(parse_action({{"type", "push"}, {"u", 10}, {"v", 20.5}, {"alpha_deg", 90}}));
  ASSERT_TRUE(p.pixel);
  EXPECT_NEAR(p.pixel->alpha, std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(p.pixel->phi, std::numbers::pi, 1e-12);
  EXPECT_THROW(parse_action({{"type", "push"}, {"u", 1}}), ServiceError);
  EXPECT_THROW(parse_action({{"type", "dance"}}), ServiceError);
  EXPECT_THROW(parse_action({{"kind", "skip"}}), ServiceError);
  try {
    parse_action({{"type", "grasp"}, {"object_id", "x"}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_EQ(e.to_json().at("code"), "malformed");
  }
}

TEST(Sessions, FirstPacketIsDeterministicAndMatchesPlanners) {
  SessionManager a({}), b({});
  const auto pa = a.create({{"seed", 17}, {"heap_size", 6}});
  const auto pb = b.create({{"seed", 17}, {"heap_size", 6}});
  EXPECT_EQ(pa.at("packet").dump(), pb.at("packet").dump());

  const auto& packet = pa.at("packet");
  episode::Episode ep(world::init_heap(BinConfig{}, 6, 17), std::make_shared<episode::FspPushPlanner>());
  const auto& obs = ep.observation();
  ASSERT_TRUE(obs.ooi);
  EXPECT_EQ(packet.at("ooi_id"), *obs.ooi);
  const auto v = ep.view();
  const auto grasp = primitives::plan_grasp(v, *obs.ooi);
  const auto push = primitives::fsp_plan_push(v, *obs.ooi);
  EXPECT_EQ(packet.at("quality").at("grasp").get<double>(), grasp.cmd ? grasp.quality : -1.0);
  EXPECT_EQ(packet.at("quality").at("push").get<double>(), push.cmd ? push.quality : -1.0);
  EXPECT_EQ(packet.at("ranking").get<std::vector<int>>(), obs.ranking);
  EXPECT_EQ(packet.at("target_id"), *ep.state().target_id());
  const auto depth = decode_depth_png(base64_decode(packet.at("depth").at("data")));
  EXPECT_EQ(depth.cols(), 640);
  EXPECT_EQ(depth.rows(), 480);
}

TEST(Sessions, IndependentSessions) {
  SessionManager m({});
  const auto s1 = m.create({{"seed", 1}, {"heap_size", 5}}).at("session_id").get<std::string>();
  const auto s2 = m.create({{"seed", 1}, {"heap_size", 5}}).at("session_id").get<std::string>();
  EXPECT_NE(s1, s2);
  m.act(s1, {{"type", "skip"}});
  EXPECT_EQ(m.packet(s1).at("step"), 1);
  EXPECT_EQ(m.packet(s2).at("step"), 0);
}

TEST(Sessions, CapacityCountsLiveSessions) {
  ServerOptions o;
  o.capacity = 2;
  SessionManager m(o);
  const auto s1 = m.create({{"seed", 1}, {"heap_size", 1}}).at("session_id").get<std::string>();
  m.create({{"seed", 2}, {"heap_size", 1}});
  try {
    m.create({{"seed", 3}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 503);
    EXPECT_EQ(e.code(), "capacity_exceeded");
  }
  // finishing a session frees its slot
  const auto r = m.act(s1, {{"type", "grasp"}});
  ASSERT_TRUE(r.at("packet").at("terminal").get<bool>());
  EXPECT_NO_THROW(m.create({{"seed", 3}, {"heap_size", 1}}));
}

TEST(Sessions, ActionBeyondTheCapIsRejected) {
  SessionManager m({});
  const auto id = m.create({{"seed", 4}, {"heap_size", 3}}).at("session_id").get<std::string>();
  int guard = 0;
  while (!m.packet(id).at("terminal").get<bool>()) {
    m.act(id, {{"type", "skip"}});
    ASSERT_LT(++guard, 200);
  }
  const auto p = m.packet(id);
  EXPECT_EQ(p.at("action_count"), 25);
  EXPECT_EQ(p.at("status"), "cap_exceeded");
  try {
    m.act(id, {{"type", "skip"}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 409);
    EXPECT_EQ(e.code(), "finished");
  }
  EXPECT_THROW(m.act("nope", {{"type", "skip"}}), ServiceError);
}

TEST(Sessions, StepRewardsFollowTheAspReward) {
  SessionManager m({});
  const auto id = m.create({{"seed", 8}, {"heap_size", 1}}).at("session_id").get<std::string>();
  // push from outside the bin is infeasible: executed as skip, -10
  auto r = m.act(id, {{"type", "push"}, {"u", 2}, {"v", 2}, {"alpha_deg", 0}});
  EXPECT_EQ(r.at("result").at("executed"), "skip");
  EXPECT_TRUE(r.at("result").at("infeasible").get<bool>());
  EXPECT_EQ(r.at("result").at("reward"), -10.0);
  r = m.act(id, {{"type", "grasp"}});
  EXPECT_EQ(r.at("result").at("reward"), 20.0);
  EXPECT_EQ(r.at("result").at("outcome"), "success");
  EXPECT_EQ(r.at("packet").at("cumulative_reward"), 10.0);
}

TEST(Sessions, LogReplaysToTheSameFinalState) {
  const auto dir = std::filesystem::temp_directory_path() / "ms_service_logs";
  std::filesystem::remove_all(dir);
  ServerOptions o;
  o.log_dir = dir.string();
  std::filesystem::create_directories(dir);
  SessionManager m(o);
  std::string all;
  for (int k = 0; k < 3; ++k) {
    const auto created = m.create({{"seed", 30 + k}, {"heap_size", 6}});
    const auto id = created.at("session_id").get<std::string>();
    Rng rng(k);
    json packet = created.at("packet");
    for (int i = 0; i < 12 && !packet.at("terminal").get<bool>(); ++i) {
      json a;
      switch (rng.below(3)) {
        case 0: a = {{"type", "skip"}}; break;
        case 1: a = {{"type", "grasp"}}; break;
        default:
          a = {{"type", "push"}, {"u", 200 + static_cast<int>(rng.below(240))}, {"v", 100 + static_cast<int>(rng.below(280))},
               {"alpha_deg", static_cast<int>(rng.below(360))}};
      }
      packet = m.act(id, a).at("packet");
    }
    const auto log = m.log_jsonl(id);
    all += log;
    std::ifstream mirrored(dir / (id + ".jsonl"));
    std::stringstream ss;
    ss << mirrored.rdbuf();
    EXPECT_EQ(ss.str(), log);
  }
  std::istringstream in(all);
  const auto trials = harness::trials_from_jsonl(in);
  ASSERT_EQ(trials.size(), 3u);
  harness::PolicySet policies;
  for (const auto& t : trials) {
    ASSERT_FALSE(t.final_state.empty());
    const auto r = harness::replay(t, policies);
    EXPECT_TRUE(r.match) << t.seed;
    EXPECT_EQ(r.replayed.final_state, t.final_state);
  }
  const auto props = m.proportions();
  EXPECT_EQ(props.at("sessions"), 3);
  const auto& rows = props.at("rows");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].at("action"), "suction");
  EXPECT_FALSE(rows[2].at("applicable").get<bool>());
  long g = props.at("executed").at("grasp"), p = props.at("executed").at("push");
  if (g + p > 0) EXPECT_NEAR(rows[0].at("proportion").get<double>() + rows[1].at("proportion").get<double>(), 1.0, 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(Http, RoutesAndErrors) {
  LiveServer srv;
  auto created = srv.post("/sessions", {{"seed", 2}, {"heap_size", 4}});
  ASSERT_EQ(created.status, 201);
  const std::string id = created.j().at("session_id");
  EXPECT_EQ(created.j().at("packet").at("type"), "observation");

  auto got = srv.get("/sessions/" + id);
  EXPECT_EQ(got.status, 200);
  EXPECT_EQ(got.j().at("session_id"), id);

  auto step = srv.post("/sessions/" + id + "/act", {{"type", "skip"}});
  EXPECT_EQ(step.status, 200);
  EXPECT_EQ(step.j().at("type"), "step");

  EXPECT_EQ(srv.post("/sessions/" + id + "/act", {{"type", "fly"}}).status, 400);
  EXPECT_EQ(srv.request(http::verb::post, "/sessions/" + id + "/act", "{not json").status, 400);
  EXPECT_EQ(srv.get("/sessions/zzz").status, 404);
  EXPECT_EQ(srv.get("/nowhere").status, 404);
  EXPECT_EQ(srv.post("/sessions", {{"heap_size", 99}}).status, 400);

  const auto log = srv.get("/sessions/" + id + "/log");
  EXPECT_EQ(log.status, 200);
  EXPECT_EQ(std::count(log.body.begin(), log.body.end(), '\n'), 1);
  const auto props = srv.get("/reports/proportions");
  EXPECT_EQ(props.status, 200);
  EXPECT_EQ(props.j().at("type"), "proportions");
}

TEST(Http, CapacityOverTheWire) {
  ServerOptions o;
  o.capacity = 1;
  LiveServer srv(o);
  EXPECT_EQ(srv.post("/sessions", {{"seed", 1}, {"heap_size", 2}}).status, 201);
  const auto full = srv.post("/sessions", {{"seed", 1}, {"heap_size", 2}});
  EXPECT_EQ(full.status, 503);
  EXPECT_EQ(full.j().at("code"), "capacity_exceeded");
}

TEST(Http, StaticFilesStayInsideTheRoot) {
  const auto root = std::filesystem::temp_directory_path() / "ms_static_root";
  std::filesystem::create_directories(root);
  std::ofstream(root / "index.html") << "<html>ui</html>";
  std::ofstream(root.parent_path() / "ms_secret.txt") << "secret";
  ServerOptions o;
  o.static_dir = root.string();
  LiveServer srv(o);
  const auto index = srv.get("/");
  EXPECT_EQ(index.status, 200);
  EXPECT_EQ(index.body, "<html>ui</html>");
  EXPECT_EQ(srv.get("/../ms_secret.txt").status, 404);
  std::filesystem::remove_all(root);
}

TEST(WebSocket, StreamsPacketsAndSteps) {
  LiveServer srv;
  const std::string id = srv.post("/sessions", {{"seed", 6}, {"heap_size", 3}}).j().at("session_id");
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(srv.port())});
  websocket::stream<tcp::socket&> ws(sock);
  ws.handshake("localhost", "/sessions/" + id + "/stream");
  auto read = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  const auto first = read();
  EXPECT_EQ(first.at("type"), "observation");
  EXPECT_EQ(first.at("session_id"), id);
  ws.write(asio::buffer(json{{"type", "skip"}}.dump()));
  const auto step = read();
  EXPECT_EQ(step.at("type"), "step");
  EXPECT_EQ(step.at("packet").at("step"), 1);
  ws.write(asio::buffer(std::string("{\"type\": 5}")));
  const auto err = read();
  EXPECT_EQ(err.at("type"), "error");
  EXPECT_EQ(err.at("code"), "malformed");
  ws.close(websocket::close_code::normal);
}

TEST(WebSocket, UnknownSessionGetsAnError) {
  LiveServer srv;
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(srv.port())});
  websocket::stream<tcp::socket&> ws(sock);
  ws.handshake("localhost", "/sessions/s404/stream");
  beast::flat_buffer buf;
  ws.read(buf);
  const auto err = json::parse(beast::buffers_to_string(buf.data()));
  EXPECT_EQ(err.at("type"), "error");
  EXPECT_EQ(err.at("code"), "unknown_session");
}

}  // namespace
