#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacit/corpus.hpp"
#include "pacit/error.hpp"
#include "pacit/hash.hpp"
#include "pacit/rng.hpp"
#include "pacit/templater.hpp"
#include "pacit/text.hpp"

namespace pacit {

struct GenerationConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-3.5-turbo-0613";
  double temperature = 0.7;
  std::size_t max_retries = 3;
  double request_timeout = 60.0;  // seconds
  std::size_t concurrency_limit = 4;
  std::uint64_t seed = 0;
  std::size_t max_requests = 0;  // hard cap per run; must be set explicitly
  std::size_t pairs_per_task = 1;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;

  void validate() const {
    if (!(temperature >= 0.0)) throw ValidationError("generation: temperature must be >= 0");
    if (concurrency_limit < 1) throw ValidationError("generation: concurrency_limit must be >= 1");
    if (max_requests < 1) throw ValidationError("generation: max_requests must be set (>= 1)");
    if (pairs_per_task < 1) throw ValidationError("generation: pairs_per_task must be >= 1");
    if (request_timeout <= 0.0) throw ValidationError("generation: request_timeout must be > 0");
  }
};

struct SeedPair {
  std::string task_id;
  SeedDemo demo;
};

struct SeedPool {
  std::vector<SeedPair> pairs;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kSeedPoolSize = 8;

/// One positive/negative pair from each of `size` distinct tasks, chosen by seed.
inline SeedPool build_seed_pool(std::span<const Task> tasks, std::uint64_t rng_seed,
                                std::size_t size = kSeedPoolSize) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (!tasks[i].positive_pool.empty() && !tasks[i].negative_pool.empty()) eligible.push_back(i);

  SeedPool pool;
  Rng rng(derive_seed(rng_seed, "seed_pool"));
  rng.shuffle(eligible);
  if (eligible.size() < size)
    pool.warnings.push_back("seed pool: only " + std::to_string(eligible.size()) +
                            " eligible tasks, wanted " + std::to_string(size));
  eligible.resize(std::min(size, eligible.size()));
  for (std::size_t ti : eligible) {
    const Task& t = tasks[ti];
    SeedPair p;
    p.task_id = t.task_id;
    p.demo.task_def = t.definition;
    p.demo.positive = t.positive_pool[rng.below(t.positive_pool.size())];
    p.demo.negative = t.negative_pool[rng.below(t.negative_pool.size())];
    pool.pairs.push_back(std::move(p));
  }
  return pool;
}

// ---- completion response parsing ----------------------------------------

namespace detail {

enum class Heading { none, positive, negative };

inline Heading heading_of(std::string_view line, const Scaffold& sc) {
  std::string_view t = text::trim(line);
  while (!t.empty() && (t.front() == '#' || t.front() == '*')) t.remove_prefix(1);
  while (!t.empty() && (t.back() == '*' || t.back() == ':')) t.remove_suffix(1);
  t = text::trim(t);
  auto eq = [](std::string_view a, std::string_view b) {
    return a.size() == b.size() && text::istarts_with(a, b);
  };
  if (eq(t, sc.positive_heading)) return Heading::positive;
  if (eq(t, sc.negative_heading)) return Heading::negative;
  return Heading::none;
}

/// Strips "- Input:" style prefixes; returns the remainder or nullopt.
inline std::optional<std::string_view> field_line(std::string_view line, std::string_view name) {
  std::string_view t = text::trim(line);
  if (!t.empty() && t.front() == '-') t = text::trim(t.substr(1));
  if (!text::istarts_with(t, name)) return std::nullopt;
  t.remove_prefix(name.size());
  if (t.empty() || t.front() != ':') return std::nullopt;
  return text::trim(t.substr(1));
}

inline LabeledExample parse_block(const std::vector<std::string_view>& lines, Tag tag,
                                  std::string_view section) {
  enum { before, in_input, in_output, after } state = before;
  std::string input, output;
  std::optional<std::string> explanation;
  auto append = [](std::string& dst, std::string_view s) {
    if (!dst.empty()) dst += '\n';
    dst += s;
  };
  for (std::string_view line : lines) {
    if (auto v = field_line(line, "Input"); v && state == before) {
      input = std::string(*v);
      state = in_input;
    } else if (auto o = field_line(line, "Output"); o && state == in_input) {
      output = std::string(*o);
      state = in_output;
    } else if (auto e = field_line(line, "Explanation"); e && state == in_output) {
      explanation = std::string(*e);
      state = after;
    } else if (state == in_input) {
      append(input, line);
    } else if (state == in_output) {
      append(output, line);
    } else if (state == after && explanation) {
      append(*explanation, line);
    }
  }
  LabeledExample ex;
  ex.tag = tag;
  ex.input = std::string(text::trim(input));
  ex.output = std::string(text::trim(output));
  if (explanation && !text::trim(*explanation).empty())
    ex.explanation = std::string(text::trim(*explanation));
  if (state == before) throw ParseError(std::string(section) + ": missing Input field");
  if (state == in_input) throw ParseError(std::string(section) + ": missing Output field");
  if (ex.input.empty()) throw ParseError(std::string(section) + ": empty Input");
  if (ex.output.empty()) throw ParseError(std::string(section) + ": empty Output");
  return ex;
}

}  // namespace detail

/// Extracts the first "Positive Example" and first "Negative Example" block
/// of a completion. Tags come from the headings, never from block order.
inline std::pair<LabeledExample, LabeledExample> parse_generated_pair(std::string_view completion,
                                                                      const Scaffold& sc = {}) {
  std::vector<std::string_view> lines;
  for (std::size_t p = 0; p <= completion.size();) {
    std::size_t e = text::line_end(completion, p);
    lines.push_back(completion.substr(p, e - p));
    p = e + 1;
  }
  std::optional<std::size_t> pos_at, neg_at;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto h = detail::heading_of(lines[i], sc);
    if (h == detail::Heading::positive && !pos_at) pos_at = i;
    if (h == detail::Heading::negative && !neg_at) neg_at = i;
  }
  if (!pos_at) throw ParseError("completion: missing '" + sc.positive_heading + "' section");
  if (!neg_at) throw ParseError("completion: missing '" + sc.negative_heading + "' section");

  auto body = [&](std::size_t start) {
    std::vector<std::string_view> out;
    for (std::size_t i = start + 1; i < lines.size(); ++i) {
      if (detail::heading_of(lines[i], sc) != detail::Heading::none) break;
      out.push_back(lines[i]);
    }
    return out;
  };
  return {detail::parse_block(body(*pos_at), Tag::positive, sc.positive_heading),
          detail::parse_block(body(*neg_at), Tag::negative, sc.negative_heading)};
}

// ---- transport ----------------------------------------------------------

struct ChatRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.7;
};

/// Chat-completions request body: a single user message with the prompt.
inline nlohmann::json chat_request_body(const ChatRequest& r) {
  return {{"model", r.model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", r.prompt}}})},
          {"temperature", r.temperature}};
}

inline std::string parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("chat response is not JSON: ") + e.what());
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("chat response has no choices[0].message.content");
  }
}

inline std::string prompt_hash(std::string_view prompt) { return content_hash(prompt); }

class CompletionTransport {
public:
  virtual ~CompletionTransport() = default;
  /// Returns the completion text or throws TransportError.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string describe() const = 0;
};

/// Replays recorded completions keyed by prompt hash. Entries for the same
/// hash are served in file order, one per request; the hash "*" is a
/// reusable fallback for any prompt.
class PlaybackTransport final : public CompletionTransport {
public:
  struct Entry {
    std::optional<std::string> completion;
    int status = 200;
    std::string error;
  };

  void add(const std::string& hash, Entry e) {
    std::lock_guard lock(mu_);
    if (hash == "*")
      fallback_ = std::move(e);
    else
      entries_[hash].push_back(std::move(e));
  }

  static PlaybackTransport from_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open playback file " + path.string());
    PlaybackTransport t;
    t.source_ = path.string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        Entry e;
        if (j.contains("completion")) e.completion = j["completion"].get<std::string>();
        e.status = j.value("status", e.completion ? 200 : 500);
        e.error = j.value("error", std::string());
        t.add(j.at("prompt_hash").get<std::string>(), std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
    }
    return t;
  }

  PlaybackTransport() = default;
  PlaybackTransport(PlaybackTransport&& o) noexcept
      : entries_(std::move(o.entries_)), fallback_(std::move(o.fallback_)), source_(std::move(o.source_)) {}

  std::string complete(const ChatRequest& request) override {
    Entry e;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(prompt_hash(request.prompt));
      if (it != entries_.end() && !it->second.empty()) {
        e = std::move(it->second.front());
        it->second.pop_front();
      } else if (fallback_) {
        e = *fallback_;
      } else {
        throw TransportError("playback: no recorded completion for prompt " +
                                 prompt_hash(request.prompt),
                             404, false);
      }
    }
    if (e.completion) return *e.completion;
    const bool transient = e.status == 429 || e.status >= 500 || e.status == 0;
    throw TransportError("playback: HTTP " + std::to_string(e.status) +
                             (e.error.empty() ? "" : ": " + e.error),
                         e.status, transient);
  }

  std::string describe() const override { return "playback:" + source_; }

private:
  std::mutex mu_;
  std::map<std::string, std::deque<Entry>> entries_;
  std::optional<Entry> fallback_;
  std::string source_ = "memory";
};

// ---- generation ---------------------------------------------------------

enum class AuditStatus { success, reject, error };

inline std::string_view to_string(AuditStatus s) noexcept {
  switch (s) {
    case AuditStatus::success: return "success";
    case AuditStatus::reject: return "reject";
    case AuditStatus::error: return "error";
  }
  return "?";
}

/// One record per request sent.
struct AuditRecord {
  std::string task_id;
  std::size_t pair_index = 0;
  std::size_t attempt = 0;
  std::string prompt_hash;
  AuditStatus status = AuditStatus::success;
  std::string completion;  // success / reject
  std::string error;       // reject reason or transport error
};

struct GeneratedPair {
  std::string task_id;
  std::size_t pair_index = 0;
  LabeledExample positive;
  LabeledExample negative;
  bool collides_with_seed = false;  // exact match with a seed-pool example
};

struct RejectRecord {
  std::string task_id;
  std::size_t pair_index = 0;
  std::string reason;
  std::string last_completion;
};

struct GenerationOutcome {
  std::vector<GeneratedPair> pairs;
  std::vector<AuditRecord> audit;
  std::vector<RejectRecord> rejects;
  std::size_t requests = 0;
  bool budget_exhausted = false;
  std::optional<std::string> fatal_error;  // non-transient transport failure

  double reject_rate() const {
    const std::size_t n = pairs.size() + rejects.size();
    return n ? static_cast<double>(rejects.size()) / static_cast<double>(n) : 0.0;
  }
};

inline nlohmann::ordered_json to_json(const AuditRecord& r) {
  nlohmann::ordered_json j;
  j["task_id"] = r.task_id;
  j["pair_index"] = r.pair_index;
  j["attempt"] = r.attempt;
  j["prompt_hash"] = r.prompt_hash;
  j["status"] = to_string(r.status);
  if (r.status == AuditStatus::error)
    j["error"] = r.error;
  else
    j["completion"] = r.completion;
  if (r.status == AuditStatus::reject) j["reason"] = r.error;
  return j;
}

inline nlohmann::ordered_json to_json(const RejectRecord& r) {
  nlohmann::ordered_json j;
  j["task_id"] = r.task_id;
  j["pair_index"] = r.pair_index;
  j["reason"] = r.reason;
  j["last_completion"] = r.last_completion;
  return j;
}

/// Generates synthetic positive/negative pairs through a completion transport.
class SelfInstructGenerator {
public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  SelfInstructGenerator(GenerationConfig cfg, CompletionTransport& transport,
                        RenderStyle style = {}, SleepFn sleep = default_sleep)
      : cfg_(std::move(cfg)), transport_(transport), style_(std::move(style)),
        sleep_(std::move(sleep)) {
    cfg_.validate();
  }

  /// Four distinct demos from the pool, drawn by `rng`.
  std::vector<SeedDemo> pick_demos(const SeedPool& pool, Rng& rng) const {
    if (pool.pairs.size() < kSelfInstructDemos)
      throw PreconditionError("seed pool has " + std::to_string(pool.pairs.size()) +
                              " pairs; " + std::to_string(kSelfInstructDemos) +
                              " demonstrations are required");
    std::vector<SeedDemo> demos;
    for (std::size_t i : rng.sample_indices(pool.pairs.size(), kSelfInstructDemos))
      demos.push_back(pool.pairs[i].demo);
    return demos;
  }

  std::string prompt_for(const Task& task, const SeedPool& pool, std::size_t pair_index) const {
    Rng rng(demo_seed(task.task_id, pair_index));
    return render_selfinstruct_prompt(pick_demos(pool, rng), task.definition, style_);
  }

  /// One pair for one task: render, request, parse, retrying transient
  /// failures and unparseable completions up to max_retries times.
  GenerationOutcome generate_pair(const Task& task, const SeedPool& pool, std::size_t pair_index) {
    GenerationOutcome out;
    const std::string prompt = prompt_for(task, pool, pair_index);
    const std::string hash = prompt_hash(prompt);
    const ChatRequest req{cfg_.model_name, prompt, cfg_.temperature};

    std::chrono::milliseconds delay = cfg_.initial_backoff;
    std::string last_reason, last_completion;
    for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        sleep_(delay);
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * cfg_.backoff_factor));
      }
      if (!reserve_request()) {
        out.budget_exhausted = true;
        out.rejects.push_back({task.task_id, pair_index, "request budget exhausted", last_completion});
        return out;
      }
      ++out.requests;
      AuditRecord rec;
      rec.task_id = task.task_id;
      rec.pair_index = pair_index;
      rec.attempt = attempt;
      rec.prompt_hash = hash;
      try {
        std::string completion = transport_.complete(req);
        try {
          auto [pos, neg] = parse_generated_pair(completion, style_.scaffold);
          rec.status = AuditStatus::success;
          rec.completion = completion;
          out.audit.push_back(std::move(rec));
          GeneratedPair gp{task.task_id, pair_index, std::move(pos), std::move(neg)};
          gp.collides_with_seed = collides(gp, pool);
          out.pairs.push_back(std::move(gp));
          return out;
        } catch (const ParseError& e) {
          rec.status = AuditStatus::reject;
          rec.completion = completion;
          rec.error = e.what();
          last_reason = std::string("unparseable completion: ") + e.what();
          last_completion = std::move(completion);
          out.audit.push_back(std::move(rec));
        }
      } catch (const TransportError& e) {
        rec.status = AuditStatus::error;
        rec.error = transport_.describe() + " (" + cfg_.endpoint + "): " + e.what();
        out.audit.push_back(rec);
        if (!e.transient()) {
          out.fatal_error = rec.error;
          out.rejects.push_back({task.task_id, pair_index, rec.error, last_completion});
          return out;
        }
        last_reason = "transient failures exhausted: " + rec.error;
      }
    }
    out.rejects.push_back({task.task_id, pair_index, last_reason, last_completion});
    return out;
  }

  /// All tasks, `pairs_per_task` pairs each, at most concurrency_limit in
  /// flight. Results are ordered by (task_id, pair_index, attempt).
  GenerationOutcome run(std::span<const Task> tasks, const SeedPool& pool) {
    struct Job {
      const Task* task;
      std::size_t pair_index;
    };
    std::vector<Job> jobs;
    for (const auto& t : tasks)
      for (std::size_t k = 0; k < cfg_.pairs_per_task; ++k) jobs.push_back({&t, k});

    std::vector<GenerationOutcome> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
      try {
        for (std::size_t i = next++; i < jobs.size() && !stop; i = next++) {
          results[i] = generate_pair(*jobs[i].task, pool, jobs[i].pair_index);
          if (results[i].fatal_error) stop = true;
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
    };
    const std::size_t n_workers = std::min<std::size_t>(cfg_.concurrency_limit, std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::thread> pool_threads;
    for (std::size_t i = 0; i < n_workers; ++i) pool_threads.emplace_back(worker);
    for (auto& th : pool_threads) th.join();
    if (err) std::rethrow_exception(err);

    GenerationOutcome all;
    for (auto& r : results) {
      std::move(r.pairs.begin(), r.pairs.end(), std::back_inserter(all.pairs));
      std::move(r.audit.begin(), r.audit.end(), std::back_inserter(all.audit));
      std::move(r.rejects.begin(), r.rejects.end(), std::back_inserter(all.rejects));
      all.requests += r.requests;
      all.budget_exhausted = all.budget_exhausted || r.budget_exhausted;
      if (r.fatal_error && !all.fatal_error) all.fatal_error = r.fatal_error;
    }
    auto key = [](const auto& x) { return std::tie(x.task_id, x.pair_index); };
    std::stable_sort(all.pairs.begin(), all.pairs.end(),
                     [&](const auto& a, const auto& b) { return key(a) < key(b); });
    std::stable_sort(all.rejects.begin(), all.rejects.end(),
                     [&](const auto& a, const auto& b) { return key(a) < key(b); });
    std::stable_sort(all.audit.begin(), all.audit.end(), [](const auto& a, const auto& b) {
      return std::tie(a.task_id, a.pair_index, a.attempt) <
             std::tie(b.task_id, b.pair_index, b.attempt);
    });
    return all;
  }

  std::size_t requests_sent() const noexcept { return requests_.load(); }

  static void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

private:
  std::uint64_t demo_seed(const std::string& task_id, std::size_t pair_index) const {
    return derive_seed(cfg_.seed, "demos", task_id + "#" + std::to_string(pair_index));
  }

  bool reserve_request() {
    std::size_t cur = requests_.load();
    do {
      if (cur >= cfg_.max_requests) return false;
    } while (!requests_.compare_exchange_weak(cur, cur + 1));
    return true;
  }

  static bool collides(const GeneratedPair& gp, const SeedPool& pool) {
    auto same = [](const LabeledExample& a, const LabeledExample& b) {
      return a.input == b.input && a.output == b.output;
    };
    for (const auto& p : pool.pairs)
      for (const LabeledExample* g : {&gp.positive, &gp.negative})
        if (same(*g, p.demo.positive) || same(*g, p.demo.negative)) return true;
    return false;
  }

  GenerationConfig cfg_;
  CompletionTransport& transport_;
  RenderStyle style_;
  SleepFn sleep_;
  std::atomic<std::size_t> requests_{0};
};

/// Tasks whose example pools are replaced by the generated pairs. Tasks
/// that received no pair are left out.
inline std::vector<Task> apply_generated(std::span<const Task> tasks,
                                         std::span<const GeneratedPair> pairs) {
  std::vector<Task> out;
  for (const auto& t : tasks) {
    Task aug = t;
    aug.positive_pool.clear();
    aug.negative_pool.clear();
    for (const auto& p : pairs) {
      if (p.task_id != t.task_id) continue;
      aug.positive_pool.push_back(p.positive);
      aug.negative_pool.push_back(p.negative);
    }
    if (!aug.positive_pool.empty()) out.push_back(std::move(aug));
  }
  return out;
}

}  // namespace pacit
