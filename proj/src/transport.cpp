#include "utb/transport.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <string>

namespace utb {

namespace {

std::string task_name(int from, int to, std::uint32_t tuple, PayloadKind kind) {
  return "tuple " + std::to_string(tuple) + (kind == PayloadKind::GR_DIAG ? " GR_DIAG" : " GL_DIAG") + " from worker " +
         std::to_string(from) + " to worker " + std::to_string(to);
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& b, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

InProcessTransport::InProcessTransport(int n_workers, DelayModel delay, std::chrono::milliseconds timeout)
    : delay_(delay), rng_(delay.seed), timeout_(timeout) {
  for (int i = 0; i < n_workers; ++i) boxes_.push_back(std::make_unique<Mailbox>());
}

void InProcessTransport::send(int from, int to, std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) {
  auto deliver_at = Clock::now();
  if (delay_.max_delay.count() > 0) {
    std::lock_guard lock(rng_mutex_);
    std::uniform_int_distribution<long> d(0, delay_.max_delay.count());
    deliver_at += std::chrono::microseconds(d(rng_));
  }
  auto& box = *boxes_.at(static_cast<std::size_t>(to));
  {
    std::lock_guard lock(box.mutex);
    VecC v = Eigen::Map<const VecC>(values.data(), static_cast<Eigen::Index>(values.size()));
    box.slots.insert_or_assign(Key{from, tuple, kind}, Message{deliver_at, std::move(v)});
  }
  box.cv.notify_all();
}

VecC InProcessTransport::receive(int self, int from, std::uint32_t tuple, PayloadKind kind) {
  auto& box = *boxes_.at(static_cast<std::size_t>(self));
  const auto deadline = Clock::now() + timeout_;
  const Key key{from, tuple, kind};
  std::unique_lock lock(box.mutex);
  for (;;) {
    const auto it = box.slots.find(key);
    const auto now = Clock::now();
    if (it != box.slots.end() && it->second.deliver_at <= now) {
      VecC v = std::move(it->second.values);
      box.slots.erase(it);
      return v;
    }
    if (aborted_) throw TransportError("transport aborted while waiting on " + task_name(from, self, tuple, kind));
    if (now >= deadline) throw TransportError("receive timed out on " + task_name(from, self, tuple, kind));
    const auto wake = it != box.slots.end() ? std::min(it->second.deliver_at, deadline) : deadline;
    box.cv.wait_until(lock, wake);
  }
}

void InProcessTransport::abort() {
  aborted_ = true;
  for (auto& b : boxes_) {
    std::lock_guard lock(b->mutex);
    b->cv.notify_all();
  }
}

std::vector<std::uint8_t> encode_frame(std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) {
  const auto count = static_cast<std::uint32_t>(values.size());
  std::vector<std::uint8_t> b;
  b.reserve(4 + 9 + 16 * values.size());
  put_u32(b, 9 + 16 * count);
  put_u32(b, tuple);
  b.push_back(static_cast<std::uint8_t>(kind));
  put_u32(b, count);
  for (const auto& z : values) {
    put_f64(b, z.real());
    put_f64(b, z.imag());
  }
  return b;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 13) throw TransportError("frame shorter than its header");
  const auto len = get_u32(bytes.data());
  if (bytes.size() != 4 + static_cast<std::size_t>(len)) throw TransportError("frame length field disagrees with size");
  Frame f;
  f.tuple = get_u32(bytes.data() + 4);
  const auto kind = bytes[8];
  if (kind > 1) throw TransportError("unknown payload kind " + std::to_string(kind));
  f.kind = static_cast<PayloadKind>(kind);
  const auto count = get_u32(bytes.data() + 9);
  if (len != 9 + 16 * static_cast<std::size_t>(count)) throw TransportError("frame value count disagrees with length");
  f.values.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto* p = bytes.data() + 13 + 16 * static_cast<std::size_t>(i);
    f.values[i] = cplx(get_f64(p), get_f64(p + 8));
  }
  return f;
}

SocketTransport::SocketTransport(int n_workers, std::chrono::milliseconds timeout)
    : n_(n_workers), fds_(static_cast<std::size_t>(n_workers * n_workers), -1), timeout_(timeout) {
  for (int a = 0; a < n_; ++a)
    for (int b = a + 1; b < n_; ++b) {
      int sv[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
        throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
      fds_[static_cast<std::size_t>(a * n_ + b)] = sv[0];
      fds_[static_cast<std::size_t>(b * n_ + a)] = sv[1];
    }
}

SocketTransport::~SocketTransport() {
  for (int f : fds_)
    if (f >= 0) ::close(f);
}

int SocketTransport::fd(int self, int peer) const {
  if (self == peer || self < 0 || peer < 0 || self >= n_ || peer >= n_) throw TransportError("invalid worker pair");
  return fds_[static_cast<std::size_t>(self * n_ + peer)];
}

void SocketTransport::abort() {
  for (int f : fds_)
    if (f >= 0) ::shutdown(f, SHUT_RDWR);
}

namespace {

void wait_ready(int fd, short events, std::chrono::milliseconds timeout, const std::string& what) {
  pollfd p{fd, events, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r == 0) throw TransportError("timed out on " + what);
  if (r < 0) throw TransportError("poll failed on " + what + ": " + std::strerror(errno));
  if (p.revents & (POLLERR | POLLNVAL)) throw TransportError("socket error on " + what);
}

}  // namespace

void SocketTransport::send(int from, int to, std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) {
  const auto frame = encode_frame(tuple, kind, values);
  const int f = fd(from, to);
  const auto what = task_name(from, to, tuple, kind);
  std::size_t done = 0;
  while (done < frame.size()) {
    wait_ready(f, POLLOUT, timeout_, what);
    const auto n = ::send(f, frame.data() + done, frame.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError("send failed on " + what + ": " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

VecC SocketTransport::receive(int self, int from, std::uint32_t tuple, PayloadKind kind) {
  const int f = fd(self, from);
  const auto what = task_name(from, self, tuple, kind);
  auto read_exact = [&](std::uint8_t* dst, std::size_t len) {
    std::size_t done = 0;
    while (done < len) {
      wait_ready(f, POLLIN, timeout_, what);
      const auto n = ::recv(f, dst + done, len - done, 0);
      if (n == 0) throw TransportError("peer disconnected on " + what);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError("recv failed on " + what + ": " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  };
  std::vector<std::uint8_t> buf(4);
  read_exact(buf.data(), 4);
  const auto len = get_u32(buf.data());
  buf.resize(4 + static_cast<std::size_t>(len));
  read_exact(buf.data() + 4, len);
  auto frame = decode_frame(buf);
  if (frame.tuple != tuple || frame.kind != kind)
    throw TransportError("out-of-order frame (tuple " + std::to_string(frame.tuple) + ") while expecting " + what);
  return std::move(frame.values);
}

std::unique_ptr<Transport> make_transport(TransportKind kind, int n_workers, DelayModel delay,
                                          std::chrono::milliseconds timeout) {
  if (kind == TransportKind::SOCKET) return std::make_unique<SocketTransport>(n_workers, timeout);
  return std::make_unique<InProcessTransport>(n_workers, delay, timeout);
}

}  // namespace utb
