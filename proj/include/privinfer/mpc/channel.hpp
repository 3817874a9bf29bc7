#pragma once

// Framed duplex channels. Frame = u32 LE payload length, u16 LE tag, payload.
// Both transports move the same frame bytes, so transcripts are identical.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "privinfer/errors.hpp"

namespace privinfer {

inline constexpr std::size_t kFrameHeader = 6;
inline constexpr std::uint32_t kMaxFramePayload = 1u << 30;

struct Frame {
  std::uint16_t tag = 0;
  std::vector<std::uint8_t> payload;
};

inline std::vector<std::uint8_t> encode_frame(std::uint16_t tag, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFramePayload) throw ProtocolError("frame payload too large");
  std::vector<std::uint8_t> out(kFrameHeader + payload.size());
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(len >> (8 * i));
  out[4] = static_cast<std::uint8_t>(tag);
  out[5] = static_cast<std::uint8_t>(tag >> 8);
  if (!payload.empty()) std::memcpy(out.data() + kFrameHeader, payload.data(), payload.size());
  return out;
}

inline std::pair<std::uint32_t, std::uint16_t> decode_header(const std::uint8_t* h) {
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{h[i]} << (8 * i);
  const auto tag = static_cast<std::uint16_t>(h[4] | (h[5] << 8));
  if (len > kMaxFramePayload) throw ProtocolError("malformed frame: length out of range");
  return {len, tag};
}

// One endpoint of a byte stream.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void write(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::uint8_t* out, std::size_t n) = 0;
  // Unblocks the peer and any pending local reads; later calls throw.
  virtual void abort() = 0;

  void send_frame(std::uint16_t tag, std::span<const std::uint8_t> payload) {
    write(encode_frame(tag, payload));
  }
  Frame recv_frame() {
    std::uint8_t h[kFrameHeader];
    read_exact(h, kFrameHeader);
    auto [len, tag] = decode_header(h);
    Frame f{tag, std::vector<std::uint8_t>(len)};
    if (len) read_exact(f.payload.data(), len);
    return f;
  }
};

namespace detail {

// Single-direction byte pipe shared by two in-process endpoints.
struct BytePipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> chunks;
  std::size_t offset = 0;  // consumed bytes of chunks.front()
  bool closed = false;
};

}  // namespace detail

class InprocChannel final : public Channel {
 public:
  InprocChannel(std::shared_ptr<detail::BytePipe> out, std::shared_ptr<detail::BytePipe> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  void write(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lk(out_->mu);
    if (out_->closed) throw TransportError("in-process channel closed");
    out_->chunks.emplace_back(bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  void read_exact(std::uint8_t* dst, std::size_t n) override {
    std::unique_lock lk(in_->mu);
    while (n > 0) {
      in_->cv.wait(lk, [&] { return in_->closed || !in_->chunks.empty(); });
      if (in_->chunks.empty()) throw TransportError("in-process channel closed by peer");
      auto& front = in_->chunks.front();
      const std::size_t take = std::min(n, front.size() - in_->offset);
      std::memcpy(dst, front.data() + in_->offset, take);
      dst += take;
      n -= take;
      in_->offset += take;
      if (in_->offset == front.size()) {
        in_->chunks.pop_front();
        in_->offset = 0;
      }
    }
  }

  void abort() override {
    for (auto* p : {out_.get(), in_.get()}) {
      std::lock_guard lk(p->mu);
      p->closed = true;
      p->chunks.clear();
      p->offset = 0;
      p->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<detail::BytePipe> out_;
  std::shared_ptr<detail::BytePipe> in_;
};

inline std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_inproc_pair() {
  auto a2b = std::make_shared<detail::BytePipe>();
  auto b2a = std::make_shared<detail::BytePipe>();
  return {std::make_shared<InprocChannel>(a2b, b2a), std::make_shared<InprocChannel>(b2a, a2b)};
}

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  void write(std::span<const std::uint8_t> bytes) override {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      if (aborted_) throw TransportError("tcp channel aborted");
      const ssize_t r = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw TransportError(std::string("tcp send failed: ") + std::strerror(errno));
      sent += static_cast<std::size_t>(r);
    }
  }

  void read_exact(std::uint8_t* dst, std::size_t n) override {
    while (n > 0) {
      if (aborted_) throw TransportError("tcp channel aborted");
      const ssize_t r = ::recv(fd_, dst, n, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r == 0) throw TransportError("tcp peer disconnected");
      if (r < 0) throw TransportError(std::string("tcp recv failed: ") + std::strerror(errno));
      dst += r;
      n -= static_cast<std::size_t>(r);
    }
  }

  void abort() override {
    aborted_ = true;
    ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
  std::atomic<bool> aborted_{false};
};

// Connects two endpoints over 127.0.0.1. Port 0 picks an ephemeral port.
// Returns {client endpoint, server endpoint}.
inline std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_tcp_pair(std::uint16_t port = 0) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  auto fail = [&](const char* what) {
    const std::string msg = std::string(what) + ": " + std::strerror(errno);
    ::close(listener);
    throw TransportError(msg);
  };
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) fail("bind failed");
  if (::listen(listener, 1) < 0) fail("listen failed");
  socklen_t len = sizeof(addr);
  if (::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) < 0) fail("getsockname failed");

  // The kernel completes the handshake against the backlog, so connect then
  // accept on one thread is fine.
  const int client_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (client_fd < 0) fail("socket() failed");
  if (::connect(client_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(client_fd);
    fail("connect failed");
  }
  const int server_fd = ::accept(listener, nullptr, nullptr);
  if (server_fd < 0) {
    ::close(client_fd);
    fail("accept failed");
  }
  ::close(listener);
  return {std::make_shared<TcpChannel>(client_fd), std::make_shared<TcpChannel>(server_fd)};
}

}  // namespace privinfer
