#pragma once

#include "utb/schedule.hpp"
#include "utb/types.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <tuple>
#include <vector>

namespace utb {

// Point-to-point channel between share-nothing workers. receive blocks until
// the matching message arrives or the timeout expires.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(int from, int to, std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) = 0;
  virtual VecC receive(int self, int from, std::uint32_t tuple, PayloadKind kind) = 0;
  // Wakes every blocked endpoint with a failure; used when a worker dies.
  virtual void abort() = 0;
};

struct DelayModel {
  std::chrono::microseconds max_delay{0};
  std::uint64_t seed = 0;
};

class InProcessTransport final : public Transport {
 public:
  InProcessTransport(int n_workers, DelayModel delay = {}, std::chrono::milliseconds timeout = std::chrono::seconds(60));

  void send(int from, int to, std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) override;
  VecC receive(int self, int from, std::uint32_t tuple, PayloadKind kind) override;
  void abort() override;

 private:
  using Clock = std::chrono::steady_clock;
  using Key = std::tuple<int, std::uint32_t, PayloadKind>;
  struct Message {
    Clock::time_point deliver_at;
    VecC values;
  };
  struct Mailbox {
    std::mutex mutex;
    std::condition_variable cv;
    std::map<Key, Message> slots;
  };

  std::vector<std::unique_ptr<Mailbox>> boxes_;
  DelayModel delay_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::chrono::milliseconds timeout_;
  std::atomic<bool> aborted_{false};
};

struct Frame {
  std::uint32_t tuple = 0;
  PayloadKind kind = PayloadKind::GR_DIAG;
  VecC values;
};

// Little-endian: u32 length of the rest, u32 tuple, u8 kind, u32 count, count x (f64 re, f64 im).
std::vector<std::uint8_t> encode_frame(std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values);
Frame decode_frame(std::span<const std::uint8_t> bytes);

// One local stream socket pair per worker pair carrying encoded frames.
class SocketTransport final : public Transport {
 public:
  SocketTransport(int n_workers, std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  void send(int from, int to, std::uint32_t tuple, PayloadKind kind, std::span<const cplx> values) override;
  VecC receive(int self, int from, std::uint32_t tuple, PayloadKind kind) override;
  void abort() override;

 private:
  int fd(int self, int peer) const;

  int n_;
  std::vector<int> fds_;  // fds_[self * n + peer]
  std::chrono::milliseconds timeout_;
};

enum class TransportKind { INPROCESS, SOCKET };

std::unique_ptr<Transport> make_transport(TransportKind kind, int n_workers, DelayModel delay = {},
                                          std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace utb
