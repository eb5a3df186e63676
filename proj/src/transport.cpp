#include "iog/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace iog {

void Inbox::push(Bytes b) {
  if (b.empty()) return;
  {
    std::lock_guard<std::mutex> lk(mu_);
    q_.push_back(std::move(b));
  }
  cv_.notify_all();
}

std::optional<Bytes> Inbox::pop(std::chrono::milliseconds wait) {
  std::unique_lock<std::mutex> lk(mu_);
  if (!cv_.wait_for(lk, wait, [&] { return !q_.empty() || closed_; })) return std::nullopt;
  if (q_.empty()) return std::nullopt;
  Bytes b = std::move(q_.front());
  q_.pop_front();
  return b;
}

void Inbox::unread(Bytes b) {
  if (b.empty()) return;
  std::lock_guard<std::mutex> lk(mu_);
  q_.push_front(std::move(b));
}

bool Inbox::empty() const {
  std::lock_guard<std::mutex> lk(mu_);
  return q_.empty();
}

void Inbox::clear() {
  std::lock_guard<std::mutex> lk(mu_);
  q_.clear();
  closed_ = false;
}

void Inbox::close() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Inbox::closed() const {
  std::lock_guard<std::mutex> lk(mu_);
  return closed_;
}

LoopbackConnection::LoopbackConnection(Inbox& peer, Rng* fragment_rng, int max_fragment)
    : peer_(peer), rng_(fragment_rng), max_fragment_(std::max(1, max_fragment)) {}

void LoopbackConnection::send(const Bytes& data) {
  if (!rng_) {
    peer_.push(data);
    return;
  }
  std::uniform_int_distribution<int> size(1, max_fragment_);
  for (std::size_t i = 0; i < data.size();) {
    std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(size(*rng_)), data.size() - i);
    peer_.push(data.substr(i, n));
    i += n;
  }
}

// ---- TCP ----------------------------------------------------------------

TcpConnection::TcpConnection(int fd, Inbox& inbox) : fd_(fd), inbox_(inbox) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  reader_ = std::thread([this] {
    char buf[4096];
    while (!stop_) {
      pollfd p{fd_, POLLIN, 0};
      int r = ::poll(&p, 1, 50);
      if (r < 0 && errno != EINTR) break;
      if (r <= 0) continue;
      ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n <= 0) break;
      inbox_.push(Bytes(buf, static_cast<std::size_t>(n)));
    }
    inbox_.close();
  });
}

TcpConnection::~TcpConnection() { close(); }

void TcpConnection::close() {
  stop_ = true;
  if (reader_.joinable()) reader_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<TcpConnection> TcpConnection::connect(const std::string& host, int port, Inbox& inbox,
                                                      std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + host + ": " + gai_strerror(rc));
  auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string last = "no address";
  for (;;) {
    for (addrinfo* a = res; a; a = a->ai_next) {
      int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
        ::freeaddrinfo(res);
        return std::make_unique<TcpConnection>(fd, inbox);
      }
      last = std::strerror(errno);
      ::close(fd);
    }
    if (std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ::freeaddrinfo(res);
  throw TransportError("cannot connect to " + host + ":" + std::to_string(port) + ": " + last);
}

void TcpConnection::send(const Bytes& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

TcpListener::TcpListener(int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    std::string why = std::strerror(errno);
    ::close(fd_);
    throw TransportError("cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpConnection> TcpListener::accept(Inbox& inbox, std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r <= 0) throw TransportError("no connection on port " + std::to_string(port_));
  int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
  return std::make_unique<TcpConnection>(fd, inbox);
}

}  // namespace iog
