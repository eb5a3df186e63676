#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "iog/bits.hpp"
#include "iog/regex.hpp"

namespace iog {

class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Ordered fragment queue fed by transports and drained by the control loop.
class Inbox {
public:
  void push(Bytes b);
  // Blocks up to `wait`; nullopt on timeout.
  std::optional<Bytes> pop(std::chrono::milliseconds wait);
  void unread(Bytes b);
  bool empty() const;
  void clear();
  // Set once the peer closed the stream.
  void close();
  bool closed() const;

private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Bytes> q_;
  bool closed_ = false;
};

class Connection {
public:
  virtual ~Connection() = default;
  virtual void send(const Bytes& data) = 0;
  virtual void close() = 0;
};

// In-memory pipe into an inbox. With a fragmentation source, each send is
// split into chunks of 1..max_fragment bytes.
class LoopbackConnection : public Connection {
public:
  LoopbackConnection(Inbox& peer, Rng* fragment_rng, int max_fragment);
  void send(const Bytes& data) override;
  void close() override {}

private:
  Inbox& peer_;
  Rng* rng_;
  int max_fragment_;
};

class TcpConnection : public Connection {
public:
  // Takes ownership of a connected socket and starts a reader thread.
  TcpConnection(int fd, Inbox& inbox);
  ~TcpConnection() override;
  static std::unique_ptr<TcpConnection> connect(const std::string& host, int port, Inbox& inbox,
                                                std::chrono::milliseconds timeout);
  void send(const Bytes& data) override;
  void close() override;

private:
  int fd_;
  Inbox& inbox_;
  std::thread reader_;
  std::atomic<bool> stop_{false};
};

class TcpListener {
public:
  explicit TcpListener(int port);
  ~TcpListener();
  int port() const { return port_; }
  std::unique_ptr<TcpConnection> accept(Inbox& inbox, std::chrono::milliseconds timeout);

private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace iog
