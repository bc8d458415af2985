#pragma once

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "pacit/error.hpp"
#include "pacit/text.hpp"

namespace pacit {

/// Named, deterministic text length function (whitespace words by default;
/// a model tokenizer through the external counter for real builds).
class LengthMeasure {
public:
  using Fn = std::function<std::size_t(std::string_view)>;

  LengthMeasure(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  static LengthMeasure whitespace() {
    return {"whitespace", [](std::string_view s) { return text::count_words(s); }};
  }

  static LengthMeasure characters() {
    return {"characters", [](std::string_view s) { return s.size(); }};
  }

  /// Runs `command` (via /bin/sh) once and keeps it alive. Protocol: one
  /// JSON string per line on its stdin, one decimal count per line back.
  static LengthMeasure external(const std::string& command);

  std::size_t operator()(std::string_view s) const { return fn_(s); }
  const std::string& name() const noexcept { return name_; }

private:
  std::string name_;
  Fn fn_;
};

struct LengthBudget {
  std::size_t max_input_units = 1024;
  std::size_t max_output_units = 128;
  LengthMeasure length_fn = LengthMeasure::whitespace();

  void validate() const {
    if (max_input_units < 1) throw ValidationError("length budget: max_input_units must be >= 1");
    if (max_output_units < 1) throw ValidationError("length budget: max_output_units must be >= 1");
  }
};

namespace detail {

class CounterProcess {
public:
  explicit CounterProcess(const std::string& command) : command_(command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw Error("token counter: pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("token counter: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (!in_ || !out_) throw Error("token counter: fdopen() failed");
  }

  CounterProcess(const CounterProcess&) = delete;
  CounterProcess& operator=(const CounterProcess&) = delete;

  ~CounterProcess() {
    if (in_) std::fclose(in_);
    if (out_) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  std::size_t count(std::string_view s) {
    std::lock_guard lock(mu_);
    const std::string line = nlohmann::json(std::string(s)).dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), in_) != line.size() || std::fflush(in_) != 0)
      throw Error("token counter '" + command_ + "': write failed");
    char buf[64];
    if (!std::fgets(buf, sizeof buf, out_))
      throw Error("token counter '" + command_ + "': no reply");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(buf, &end, 10);
    if (end == buf) throw ParseError("token counter '" + command_ + "': bad reply '" + buf + "'");
    return static_cast<std::size_t>(v);
  }

private:
  std::string command_;
  pid_t pid_ = -1;
  std::FILE* in_ = nullptr;
  std::FILE* out_ = nullptr;
  std::mutex mu_;
};

}  // namespace detail

inline LengthMeasure LengthMeasure::external(const std::string& command) {
  std::signal(SIGPIPE, SIG_IGN);
  auto proc = std::make_shared<detail::CounterProcess>(command);
  return {"external:" + command, [proc](std::string_view s) { return proc->count(s); }};
}

}  // namespace pacit
