#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace utb {

// Process peak resident set size in bytes.
long peak_rss_bytes();
// Current resident set size in bytes.
long current_rss_bytes();

struct ProfileNode {
  std::string name;
  double wall_seconds = 0.0;
  long peak_memory_bytes = 0;
  long calls = 0;
  std::vector<std::unique_ptr<ProfileNode>> children;
  ProfileNode* parent = nullptr;

  ProfileNode* child(std::string_view n);
};

// Hierarchical tic/toc timer for one worker. Repeated names under the same
// parent accumulate into one node.
class Profiler {
 public:
  explicit Profiler(int rank = 0);

  void tic(std::string_view name);
  void toc(std::string_view name);
  // Closes the root; open timers are an error.
  void finish();

  int rank() const { return rank_; }
  const ProfileNode& root() const { return *root_; }
  std::vector<std::string> open_stack() const;

 private:
  using Clock = std::chrono::steady_clock;
  int rank_;
  std::unique_ptr<ProfileNode> root_;
  ProfileNode* current_;
  std::vector<Clock::time_point> starts_;
  Clock::time_point created_;
};

class ScopedTimer {
 public:
  ScopedTimer(Profiler& p, std::string name) : p_(p), name_(std::move(name)) { p_.tic(name_); }
  ~ScopedTimer() { p_.toc(name_); }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  Profiler& p_;
  std::string name_;
};

// <profile> with one <timer name="worker" rank=".."> root per worker.
std::string emit_profile(std::span<const Profiler* const> workers);

}  // namespace utb
