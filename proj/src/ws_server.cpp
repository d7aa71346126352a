#include "evcorridor/ws_server.hpp"

#include <chrono>
#include <deque>
#include <iostream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace evc {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket sock, ServeSession* session, std::shared_ptr<Connection>* slot)
        : ws_(std::move(sock)), timer_(ws_.get_executor()), session_(session), slot_(slot) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    // Used for a second console while one is attached.
    void reject(const std::string& why) {
        session_ = nullptr;
        ws_.async_accept([self = shared_from_this(), why](beast::error_code ec) {
            if (ec) return;
            self->send(wire::serialize(wire::Error{why}));
            self->close_after_flush_ = true;
        });
    }

    void shutdown() {
        timer_.cancel();
        if (ws_.is_open()) {
            beast::error_code ec;
            beast::get_lowest_layer(ws_).socket().close(ec);
        }
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return detach();
        for (auto& l : session_->on_connect().lines) send(std::move(l));
        do_read();
        schedule_tick();
    }

    void do_read() {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) return detach();
        std::string line = beast::buffers_to_string(buf_.data());
        buf_.consume(buf_.size());
        auto rep = session_->on_message(line);
        for (auto& l : rep.lines) send(std::move(l));
        if (rep.close) {
            close_after_flush_ = true;
            maybe_close();
            return;
        }
        do_read();
    }

    void schedule_tick() {
        const double rate = session_->rate();
        timer_.expires_after(std::chrono::microseconds(static_cast<long>(1e6 / rate)));
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || !self->session_ || self->detached_) return;
            for (auto& l : self->session_->tick().lines) self->send(std::move(l));
            self->schedule_tick();
        });
    }

    void send(std::string msg) {
        out_.push_back(std::move(msg));
        if (out_.size() == 1) do_write();
    }

    void do_write() {
        ws_.text(true);
        ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->detach();
            self->out_.pop_front();
            if (!self->out_.empty()) self->do_write();
            else self->maybe_close();
        });
    }

    void maybe_close() {
        if (!close_after_flush_ || !out_.empty() || closing_) return;
        closing_ = true;
        timer_.cancel();
        ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->detach(); });
    }

    void detach() {
        if (detached_) return;
        detached_ = true;
        timer_.cancel();
        if (session_) {
            session_->on_disconnect();
            if (slot_ && slot_->get() == this) slot_->reset();
        }
    }

    websocket::stream<beast::tcp_stream> ws_;
    asio::steady_timer timer_;
    ServeSession* session_;
    std::shared_ptr<Connection>* slot_;
    beast::flat_buffer buf_;
    std::deque<std::string> out_;
    bool close_after_flush_ = false;
    bool closing_ = false;
    bool detached_ = false;
};

}  // namespace

struct WsServer::Impl {
    asio::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    ServeSession& session;
    std::shared_ptr<Connection> active;
    std::unique_ptr<asio::signal_set> signals;

    explicit Impl(ServeSession& s) : session(s) {}

    void do_accept() {
        acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket sock) {
            if (ec) {
                if (ec != asio::error::operation_aborted) std::cerr << "accept: " << ec.message() << "\n";
                if (!acceptor.is_open()) return;
            } else if (active) {
                std::make_shared<Connection>(std::move(sock), &session, nullptr)
                    ->reject("another console is already attached");
            } else {
                active = std::make_shared<Connection>(std::move(sock), &session, &active);
                active->start();
            }
            do_accept();
        });
    }
};

WsServer::WsServer(ServeSession& session, const std::string& address, uint16_t port)
    : impl_(std::make_unique<Impl>(session)) {
    tcp::endpoint ep{asio::ip::make_address(address), port};
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen(asio::socket_base::max_listen_connections);
}

WsServer::~WsServer() = default;

uint16_t WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::run() {
    impl_->do_accept();
    impl_->ioc.run();
}

void WsServer::stop() {
    asio::post(impl_->ioc, [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
        if (impl_->active) impl_->active->shutdown();
        if (impl_->signals) impl_->signals->cancel();
        impl_->ioc.stop();
    });
}

void WsServer::stop_on_signals() {
    impl_->signals = std::make_unique<asio::signal_set>(impl_->ioc, SIGINT, SIGTERM);
    impl_->signals->async_wait([this](beast::error_code ec, int) {
        if (!ec) stop();
    });
}

}  // namespace evc
