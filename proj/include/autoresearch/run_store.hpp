#pragma once
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::store {

namespace fs = std::filesystem;

using Clock = std::function<std::int64_t()>; // milliseconds since the epoch
Clock system_clock();
Clock fixed_clock(std::int64_t ms);

enum class EventKind { Turn, Action, Observation, Summary, Feedback, Control, StateChange };

std::string_view kind_name(EventKind k);
EventKind parse_kind(std::string_view s); // InvalidArgument

struct TraceEvent {
    std::uint64_t seq = 0;
    std::int64_t ts = 0;
    EventKind kind = EventKind::StateChange;
    nlohmann::json payload = nlohmann::json::object();

    nlohmann::json to_json() const;
    static TraceEvent from_json(const nlohmann::json& j);
    bool operator==(const TraceEvent& o) const {
        return seq == o.seq && ts == o.ts && kind == o.kind && payload == o.payload;
    }
};

// Record framing: u32 little-endian body length, u32 little-endian CRC-32 of
// the body, then the body (compact JSON of the event).
std::string encode_record(const TraceEvent& event);

struct TraceReadResult {
    std::vector<TraceEvent> events;
    std::uint64_t valid_bytes = 0;
    bool torn = false; // trailing bytes that do not form a valid record
};

// Reads the longest valid prefix. Missing file reads as empty.
TraceReadResult read_trace(const fs::path& path);

// Append-only trace file. Opening truncates a torn tail; each append is
// flushed to disk before returning. Thread-safe.
class TraceLog {
public:
    explicit TraceLog(fs::path path, Clock clock = system_clock());
    ~TraceLog();
    TraceLog(const TraceLog&) = delete;
    TraceLog& operator=(const TraceLog&) = delete;

    std::uint64_t append(EventKind kind, nlohmann::json payload); // StorageError
    std::uint64_t last_seq() const;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    Clock clock_;
    mutable std::mutex mutex_;
    int fd_ = -1;
    std::uint64_t last_seq_ = 0;
};

enum class Outcome { Running, Completed, BudgetExhausted, Aborted, Failed };
std::string_view outcome_name(Outcome o);
Outcome parse_outcome(std::string_view s); // InvalidArgument
inline bool is_terminal(Outcome o) { return o != Outcome::Running; }

struct RunState {
    std::string run_id;
    std::size_t step_index = 0;
    std::size_t step_budget = 0;
    std::string plan_status;
    bool awaiting_feedback = false;
    bool paused = false;
    Outcome outcome = Outcome::Running;
    std::string answer; // Completed
    std::string reason; // Failed, Aborted, BudgetExhausted

    nlohmann::json to_json() const;
    static RunState from_json(const nlohmann::json& j);
};

struct RunRecord {
    RunState state;
    std::string task;
    std::int64_t created = 0;
    std::int64_t updated = 0;
    nlohmann::json config = nlohmann::json::object();

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

struct FeedbackMessage {
    std::string run_id;
    std::string author;
    std::string text;
    std::optional<std::uint64_t> in_reply_to;

    nlohmann::json to_json() const;
};

enum class ControlAction { Pause, Resume, Abort };
std::string_view control_name(ControlAction a);
ControlAction parse_control(std::string_view s); // InvalidArgument

// Many producers, one consumer (the run loop).
class FeedbackChannel {
public:
    enum class WaitStatus { Delivered, TimedOut, Aborted };
    struct WaitResult {
        WaitStatus status;
        std::optional<FeedbackMessage> message;
    };

    void post(FeedbackMessage message);
    void control(ControlAction action);

    // Blocks for the next message. Paused time counts toward the timeout.
    WaitResult wait(std::chrono::milliseconds timeout);
    // Non-blocking; returns queued messages in arrival order.
    std::vector<FeedbackMessage> drain();
    // Blocks while paused. Returns false once aborted.
    bool checkpoint();

    bool aborted() const;
    bool paused() const;
    void set_awaiting(bool v);
    bool awaiting() const;
    std::size_t enqueued() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<FeedbackMessage> queue_;
    bool paused_ = false;
    bool aborted_ = false;
    bool awaiting_ = false;
    std::size_t enqueued_ = 0;
};

// Where a run loop writes its history.
class TraceSink {
public:
    virtual ~TraceSink() = default;
    virtual std::uint64_t append(EventKind kind, nlohmann::json payload) = 0;
    virtual void update_state(const RunState& state) = 0;
};

// In-memory sink for tests and dry runs.
class MemoryTrace : public TraceSink {
public:
    explicit MemoryTrace(Clock clock = fixed_clock(0)) : clock_(std::move(clock)) {}
    std::uint64_t append(EventKind kind, nlohmann::json payload) override;
    void update_state(const RunState& state) override;
    std::vector<TraceEvent> events() const;
    RunState state() const;

private:
    Clock clock_;
    mutable std::mutex mutex_;
    std::vector<TraceEvent> events_;
    RunState state_;
};

// <runs_dir>/<run_id>/{run.json, trace.log, workspace/}
class RunStore {
public:
    explicit RunStore(fs::path runs_dir, Clock clock = system_clock());
    ~RunStore();
    RunStore(const RunStore&) = delete;
    RunStore& operator=(const RunStore&) = delete;

    const fs::path& runs_dir() const { return runs_dir_; }
    fs::path run_dir(const std::string& run_id) const;

    // Fresh id unless one is given; an existing id is rejected with
    // InvalidArgument.
    std::string create_run(const std::string& task, nlohmann::json config, std::string run_id = {});

    std::uint64_t append_event(const std::string& run_id, EventKind kind, nlohmann::json payload);
    void update_state(const std::string& run_id, const RunState& state);

    std::vector<RunRecord> list_runs() const;
    RunRecord get_run(const std::string& run_id) const; // UnknownRun
    bool has_run(const std::string& run_id) const;

    std::vector<TraceEvent> read_events(const std::string& run_id, std::uint64_t from_seq = 1) const;

    // Delivers events with seq >= from_seq in order, then follows appends
    // until the run is terminal and fully delivered. Returns early when sink
    // returns false or should_stop() turns true.
    void stream_events(const std::string& run_id, std::uint64_t from_seq,
                       const std::function<bool(const TraceEvent&)>& sink,
                       const std::function<bool()>& should_stop = {}) const;

    void attach(const std::string& run_id, std::shared_ptr<FeedbackChannel> channel);
    void detach(const std::string& run_id);

    // Throws UnknownRun, RunTerminal, RunNotAttached, InvalidArgument.
    std::uint64_t post_feedback(const FeedbackMessage& message);
    std::uint64_t control(const std::string& run_id, ControlAction action);

    // A sink bound to one run of this store.
    std::unique_ptr<TraceSink> sink(const std::string& run_id);

private:
    struct Live;
    Live& live(const std::string& run_id) const;
    void write_record(const RunRecord& rec) const;

    fs::path runs_dir_;
    Clock clock_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::unique_ptr<Live>> live_;
};

} // namespace autoresearch::store
