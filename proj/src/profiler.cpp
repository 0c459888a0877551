#include "utb/profiler.hpp"
#include "utb/types.hpp"

#include <sys/resource.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace utb {

long peak_rss_bytes() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return ru.ru_maxrss * 1024L;
}

long current_rss_bytes() {
  std::ifstream f("/proc/self/statm");
  long size = 0;
  long resident = 0;
  f >> size >> resident;
  return resident * sysconf(_SC_PAGESIZE);
}

ProfileNode* ProfileNode::child(std::string_view n) {
  for (auto& c : children)
    if (c->name == n) return c.get();
  children.push_back(std::make_unique<ProfileNode>());
  auto* c = children.back().get();
  c->name = std::string(n);
  c->parent = this;
  return c;
}

Profiler::Profiler(int rank)
    : rank_(rank), root_(std::make_unique<ProfileNode>()), current_(root_.get()), created_(Clock::now()) {
  root_->name = "worker";
  root_->calls = 1;
}

std::vector<std::string> Profiler::open_stack() const {
  std::vector<std::string> s;
  for (const ProfileNode* n = current_; n && n != root_.get(); n = n->parent) s.insert(s.begin(), n->name);
  return s;
}

void Profiler::tic(std::string_view name) {
  current_ = current_->child(name);
  ++current_->calls;
  current_->peak_memory_bytes = std::max(current_->peak_memory_bytes, peak_rss_bytes());
  starts_.push_back(Clock::now());
}

void Profiler::toc(std::string_view name) {
  if (current_ == root_.get() || current_->name != name) {
    std::string stack;
    for (const auto& s : open_stack()) stack += (stack.empty() ? "" : " > ") + s;
    throw Error("toc(\"" + std::string(name) + "\") does not match the open timer" +
                (current_ == root_.get() ? std::string(" (none open)") : " \"" + current_->name + "\"") +
                "; open stack: [" + stack + "]");
  }
  const auto end = Clock::now();
  current_->wall_seconds += std::chrono::duration<double>(end - starts_.back()).count();
  current_->peak_memory_bytes = std::max(current_->peak_memory_bytes, peak_rss_bytes());
  starts_.pop_back();
  current_ = current_->parent;
}

void Profiler::finish() {
  if (current_ != root_.get()) {
    std::string stack;
    for (const auto& s : open_stack()) stack += (stack.empty() ? "" : " > ") + s;
    throw Error("profiler finished with open timers: [" + stack + "]");
  }
  root_->wall_seconds = std::chrono::duration<double>(Clock::now() - created_).count();
  root_->peak_memory_bytes = std::max(root_->peak_memory_bytes, peak_rss_bytes());
}

namespace {

std::string escape(std::string_view s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

void emit(std::ostringstream& out, const ProfileNode& n, int depth, const int* rank) {
  const std::string pad(static_cast<std::size_t>(2 * depth), ' ');
  out << pad << "<timer name=\"" << escape(n.name) << "\"";
  if (rank) out << " rank=\"" << *rank << "\"";
  out << " wall_s=\"" << std::setprecision(9) << n.wall_seconds << "\" mem_peak_b=\"" << n.peak_memory_bytes
      << "\" calls=\"" << n.calls << "\"";
  if (n.children.empty()) {
    out << "/>\n";
    return;
  }
  out << ">\n";
  for (const auto& c : n.children) emit(out, *c, depth + 1, nullptr);
  out << pad << "</timer>\n";
}

}  // namespace

std::string emit_profile(std::span<const Profiler* const> workers) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<profile workers=\"" << workers.size() << "\">\n";
  for (const auto* p : workers) {
    const int r = p->rank();
    emit(out, p->root(), 1, &r);
  }
  out << "</profile>\n";
  return out.str();
}

}  // namespace utb
