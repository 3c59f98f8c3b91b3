#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <filesystem>
#include <fstream>
#include <list>
#include <regex>
#include <set>
#include <thread>

#include "ms/service.hpp"

namespace ms::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct Server::Impl {
  explicit Impl(ServerOptions o) : manager(std::move(o)), acceptor(ioc) {
    const auto& opts = manager.options();
    tcp::endpoint ep(asio::ip::make_address(opts.host), static_cast<unsigned short>(opts.port));
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
    if (!opts.log_dir.empty()) std::filesystem::create_directories(opts.log_dir);
  }

  SessionManager manager;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::mutex conn_mutex;
  std::set<std::shared_ptr<tcp::socket>> open_sockets;
  std::list<std::thread> workers;
  std::atomic<bool> stopping{false};

  // Unblocks every connection worker and waits for it.
  void drain() {
    std::list<std::thread> done;
    {
      std::lock_guard lock(conn_mutex);
      for (const auto& s : open_sockets) {
        beast::error_code ignored;
        s->shutdown(tcp::socket::shutdown_both, ignored);
      }
      done.swap(workers);
    }
    for (auto& t : done) t.join();
  }

  void accept_next() {
    auto sock = std::make_shared<tcp::socket>(ioc);
    acceptor.async_accept(*sock, [this, sock](beast::error_code ec) {
      if (ec || stopping) return;
      {
        std::lock_guard lock(conn_mutex);
        open_sockets.insert(sock);
        workers.emplace_back([this, sock] { serve(sock); });
      }
      accept_next();
    });
  }

  void serve(std::shared_ptr<tcp::socket> sock) {
    try {
      beast::flat_buffer buffer;
      for (;;) {
        http::request<http::string_body> req;
        http::read(*sock, buffer, req);
        if (websocket::is_upgrade(req)) {
          stream(*sock, req);
          break;
        }
        http::response<http::string_body> res = handle(req);
        const bool close = res.need_eof();
        http::write(*sock, res);
        if (close) break;
      }
    } catch (const std::exception&) {
      // client went away or sent garbage; drop the connection
    }
    beast::error_code ignored;
    sock->shutdown(tcp::socket::shutdown_both, ignored);
    std::lock_guard lock(conn_mutex);
    open_sockets.erase(sock);
  }

  static http::response<http::string_body> reply(const http::request<http::string_body>& req, http::status st,
                                                 std::string body, const char* type = "application/json") {
    http::response<http::string_body> res{st, req.version()};
    res.set(http::field::server, "ms-serve");
    res.set(http::field::content_type, type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  http::response<http::string_body> handle(const http::request<http::string_body>& req) {
    static const std::regex session_re("^/sessions/([A-Za-z0-9]+)(/act|/log)?$");
    const std::string target(req.target());
    const std::string path = target.substr(0, target.find('?'));
    try {
      std::smatch m;
      if (req.method() == http::verb::post && path == "/sessions") {
        const json cfg = req.body().empty() ? json::object() : json::parse(req.body());
        return reply(req, http::status::created, manager.create(cfg).dump());
      }
      if (req.method() == http::verb::get && path == "/reports/proportions") {
        return reply(req, http::status::ok, manager.proportions().dump());
      }
      if (std::regex_match(path, m, session_re)) {
        const std::string id = m[1];
        const std::string sub = m[2];
        if (req.method() == http::verb::get && sub.empty()) return reply(req, http::status::ok, manager.packet(id).dump());
        if (req.method() == http::verb::get && sub == "/log") {
          return reply(req, http::status::ok, manager.log_jsonl(id), "application/x-ndjson");
        }
        if (req.method() == http::verb::post && sub == "/act") {
          return reply(req, http::status::ok, manager.act(id, json::parse(req.body())).dump());
        }
      }
      if (req.method() == http::verb::get && !manager.options().static_dir.empty()) {
        if (auto file = static_file(path)) return reply(req, http::status::ok, *file, mime_of(path));
      }
      return reply(req, http::status::not_found, ServiceError(404, "not_found", "no route for " + path).to_json().dump());
    } catch (const ServiceError& e) {
      return reply(req, static_cast<http::status>(e.status()), e.to_json().dump());
    } catch (const json::exception& e) {
      return reply(req, http::status::bad_request, ServiceError(400, "malformed", e.what()).to_json().dump());
    } catch (const std::exception& e) {
      return reply(req, http::status::internal_server_error,
                   ServiceError(500, "internal", e.what()).to_json().dump());
    }
  }

  std::optional<std::string> static_file(const std::string& path) const {
    namespace fs = std::filesystem;
    const fs::path root = fs::weakly_canonical(manager.options().static_dir);
    const fs::path p = fs::weakly_canonical(root / (path == "/" ? "index.html" : path.substr(1)));
    const auto rel = p.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") return std::nullopt;
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  static const char* mime_of(const std::string& path) {
    auto ends = [&](const char* ext) {
      const std::string e(ext);
      return path.size() >= e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0;
    };
    if (path == "/" || ends(".html")) return "text/html";
    if (ends(".js")) return "text/javascript";
    if (ends(".css")) return "text/css";
    if (ends(".json")) return "application/json";
    return "application/octet-stream";
  }

  // WS /sessions/{id}/stream: the current packet on connect, then one reply
  // per action message (step or error).
  void stream(tcp::socket& sock, const http::request<http::string_body>& req) {
    static const std::regex stream_re("^/sessions/([A-Za-z0-9]+)/stream$");
    const std::string target(req.target());
    std::smatch m;
    websocket::stream<tcp::socket&> ws(sock);
    ws.accept(req);
    ws.text(true);
    const std::string path = target.substr(0, target.find('?'));
    if (!std::regex_match(path, m, stream_re)) {
      ws.write(asio::buffer(ServiceError(404, "not_found", "no stream at " + path).to_json().dump()));
      ws.close(websocket::close_code::normal);
      return;
    }
    const std::string id = m[1];
    try {
      ws.write(asio::buffer(manager.packet(id).dump()));
    } catch (const ServiceError& e) {
      ws.write(asio::buffer(e.to_json().dump()));
      ws.close(websocket::close_code::normal);
      return;
    }
    for (;;) {
      beast::flat_buffer buf;
      beast::error_code ec;
      ws.read(buf, ec);
      if (ec) return;
      std::string out;
      try {
        out = manager.act(id, json::parse(beast::buffers_to_string(buf.data()))).dump();
      } catch (const ServiceError& e) {
        out = e.to_json().dump();
      } catch (const json::exception& e) {
        out = ServiceError(400, "malformed", e.what()).to_json().dump();
      }
      ws.write(asio::buffer(out));
    }
  }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) { impl_->accept_next(); }

Server::~Server() {
  stop();
  impl_->drain();
}

int Server::port() const { return impl_->acceptor.local_endpoint().port(); }

SessionManager& Server::sessions() { return impl_->manager; }

void Server::run() {
  impl_->ioc.run();
  impl_->drain();
}

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  asio::post(impl_->ioc, [this] {
    beast::error_code ignored;
    impl_->acceptor.close(ignored);
  });
  impl_->ioc.stop();
}

}  // namespace ms::service
