#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <vector>

#include "scriptorium/core/error.hpp"

namespace scriptorium {

/// A child process whose stdin and stdout are one end of a Unix socket pair, spoken
/// to line by line. stderr is inherited. Writes never raise SIGPIPE.
class LineChannel {
 public:
  explicit LineChannel(const std::vector<std::string>& command) {
    if (command.empty()) throw ArgumentError("empty detector command");
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
      throw DetectorError(std::string("socketpair failed: ") + std::strerror(errno));
    std::vector<char*> argv;
    for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw DetectorError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
  }

  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  ~LineChannel() { terminate(); }

  void send_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw DetectorError(std::string("detector input closed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Blocks for the next line; DetectorError on EOF or when `timeout` elapses.
  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw DetectorError("detector timed out");
      pollfd p{fd_, POLLIN, 0};
      const int wait_ms = static_cast<int>(std::min<long long>(left.count(), 60'000));
      const int r = ::poll(&p, 1, wait_ms);
      if (r < 0 && errno != EINTR) throw DetectorError(std::string("poll failed: ") + std::strerror(errno));
      if (r <= 0) continue;
      char chunk[65536];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw DetectorError(std::string("detector read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw DetectorError("detector exited" + exit_description());
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Closes the channel and reaps the child, killing it after a short grace period.
  void terminate() noexcept {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      for (int i = 0; i < 50 && !reap(false); ++i) ::usleep(20'000);
      if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        reap(true);
      }
    }
  }

 private:
  bool reap(bool block) noexcept {
    int status = 0;
    const auto r = ::waitpid(pid_, &status, block ? 0 : WNOHANG);
    if (r == pid_) {
      status_ = status;
      pid_ = -1;
      return true;
    }
    return r < 0;
  }

  std::string exit_description() {
    for (int i = 0; i < 25 && pid_ > 0 && !reap(false); ++i) ::usleep(20'000);
    if (pid_ > 0 || status_ < 0) return "";
    if (WIFEXITED(status_)) return " with status " + std::to_string(WEXITSTATUS(status_));
    if (WIFSIGNALED(status_)) return " on signal " + std::to_string(WTERMSIG(status_));
    return "";
  }

  pid_t pid_ = -1;
  int fd_ = -1;
  int status_ = -1;
  std::string buffer_;
};

}  // namespace scriptorium
