#include "autoresearch/run_store.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <random>
#include <sys/stat.h>
#include <unistd.h>

namespace autoresearch::store {

using nlohmann::json;

namespace {

std::string dump(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

std::uint32_t crc_of(std::string_view body) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

constexpr std::uint32_t kMaxRecord = 64u * 1024 * 1024;

// Parses records starting at offset; expected_seq is the seq the first one must carry.
TraceReadResult read_from(const fs::path& path, std::uint64_t offset, std::uint64_t expected_seq) {
    TraceReadResult r;
    r.valid_bytes = offset;
    std::ifstream in(path, std::ios::binary);
    if (!in) return r;
    in.seekg(static_cast<std::streamoff>(offset));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < data.size()) {
        if (data.size() - pos < 8) {
            r.torn = true;
            break;
        }
        const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
        const auto len = get_u32(p);
        const auto crc = get_u32(p + 4);
        if (len > kMaxRecord || data.size() - pos - 8 < len) {
            r.torn = true;
            break;
        }
        std::string_view body(data.data() + pos + 8, len);
        if (crc_of(body) != crc) {
            r.torn = true;
            break;
        }
        auto j = json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            r.torn = true;
            break;
        }
        TraceEvent ev;
        try {
            ev = TraceEvent::from_json(j);
        } catch (const std::exception&) {
            r.torn = true;
            break;
        }
        if (ev.seq != expected_seq) {
            r.torn = true;
            break;
        }
        ++expected_seq;
        r.events.push_back(std::move(ev));
        pos += 8 + len;
        r.valid_bytes = offset + pos;
    }
    return r;
}

void write_atomic(const fs::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) fail(ErrorCode::StorageError, "cannot write " + tmp + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < content.size()) {
        const auto n = ::write(fd, content.data() + done, content.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            fail(ErrorCode::StorageError, "cannot write " + tmp + ": " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0)
        fail(ErrorCode::StorageError, "cannot rename " + tmp + ": " + std::strerror(errno));
}

} // namespace

Clock system_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

Clock fixed_clock(std::int64_t ms) {
    return [ms] { return ms; };
}

std::string_view kind_name(EventKind k) {
    switch (k) {
    case EventKind::Turn: return "turn";
    case EventKind::Action: return "action";
    case EventKind::Observation: return "observation";
    case EventKind::Summary: return "summary";
    case EventKind::Feedback: return "feedback";
    case EventKind::Control: return "control";
    case EventKind::StateChange: return "state_change";
    }
    return "state_change";
}

EventKind parse_kind(std::string_view s) {
    for (auto k : {EventKind::Turn, EventKind::Action, EventKind::Observation, EventKind::Summary, EventKind::Feedback,
                   EventKind::Control, EventKind::StateChange})
        if (kind_name(k) == s) return k;
    fail(ErrorCode::InvalidArgument, "unknown event kind '" + std::string(s) + "'");
}

json TraceEvent::to_json() const {
    return {{"seq", seq}, {"ts", ts}, {"kind", kind_name(kind)}, {"payload", payload}};
}

TraceEvent TraceEvent::from_json(const json& j) {
    TraceEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.ts = j.at("ts").get<std::int64_t>();
    e.kind = parse_kind(j.at("kind").get<std::string>());
    e.payload = j.at("payload");
    return e;
}

std::string encode_record(const TraceEvent& event) {
    const auto body = dump(event.to_json());
    std::string out;
    out.reserve(body.size() + 8);
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    put_u32(out, crc_of(body));
    out += body;
    return out;
}

TraceReadResult read_trace(const fs::path& path) {
    return read_from(path, 0, 1);
}

TraceLog::TraceLog(fs::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
    const auto existing = read_trace(path_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(ErrorCode::StorageError, "cannot open trace " + path_.string() + ": " + std::strerror(errno));
    if (existing.torn && ::ftruncate(fd_, static_cast<off_t>(existing.valid_bytes)) != 0) {
        ::close(fd_);
        fail(ErrorCode::StorageError, "cannot truncate torn trace " + path_.string());
    }
    ::lseek(fd_, static_cast<off_t>(existing.valid_bytes), SEEK_SET);
    last_seq_ = existing.events.empty() ? 0 : existing.events.back().seq;
}

TraceLog::~TraceLog() {
    if (fd_ >= 0) ::close(fd_);
}

std::uint64_t TraceLog::append(EventKind kind, json payload) {
    std::lock_guard lock(mutex_);
    TraceEvent ev;
    ev.seq = last_seq_ + 1;
    ev.ts = clock_();
    ev.kind = kind;
    ev.payload = std::move(payload);
    const auto rec = encode_record(ev);
    std::size_t done = 0;
    while (done < rec.size()) {
        const auto n = ::write(fd_, rec.data() + done, rec.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::StorageError, "trace write failed: " + std::string(std::strerror(errno)));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) fail(ErrorCode::StorageError, "trace sync failed: " + std::string(std::strerror(errno)));
    last_seq_ = ev.seq;
    return ev.seq;
}

std::uint64_t TraceLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return last_seq_;
}

std::string_view outcome_name(Outcome o) {
    switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Completed: return "completed";
    case Outcome::BudgetExhausted: return "budget_exhausted";
    case Outcome::Aborted: return "aborted";
    case Outcome::Failed: return "failed";
    }
    return "failed";
}

Outcome parse_outcome(std::string_view s) {
    for (auto o : {Outcome::Running, Outcome::Completed, Outcome::BudgetExhausted, Outcome::Aborted, Outcome::Failed})
        if (outcome_name(o) == s) return o;
    fail(ErrorCode::InvalidArgument, "unknown outcome '" + std::string(s) + "'");
}

json RunState::to_json() const {
    return {{"run_id", run_id},       {"step_index", step_index},
            {"step_budget", step_budget}, {"plan_status", plan_status},
            {"awaiting_feedback", awaiting_feedback}, {"paused", paused},
            {"outcome", outcome_name(outcome)}, {"answer", answer},
            {"reason", reason}};
}

RunState RunState::from_json(const json& j) {
    RunState s;
    s.run_id = j.value("run_id", "");
    s.step_index = j.value("step_index", std::size_t{0});
    s.step_budget = j.value("step_budget", std::size_t{0});
    s.plan_status = j.value("plan_status", "");
    s.awaiting_feedback = j.value("awaiting_feedback", false);
    s.paused = j.value("paused", false);
    s.outcome = parse_outcome(j.value("outcome", "running"));
    s.answer = j.value("answer", "");
    s.reason = j.value("reason", "");
    return s;
}

json RunRecord::to_json() const {
    auto j = state.to_json();
    j["task"] = task;
    j["created"] = created;
    j["updated"] = updated;
    j["config"] = config;
    return j;
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.state = RunState::from_json(j);
    r.task = j.value("task", "");
    r.created = j.value("created", std::int64_t{0});
    r.updated = j.value("updated", std::int64_t{0});
    r.config = j.value("config", json::object());
    return r;
}

json FeedbackMessage::to_json() const {
    json j = {{"author", author}, {"text", text}};
    if (in_reply_to) j["in_reply_to"] = *in_reply_to;
    return j;
}

std::string_view control_name(ControlAction a) {
    switch (a) {
    case ControlAction::Pause: return "pause";
    case ControlAction::Resume: return "resume";
    case ControlAction::Abort: return "abort";
    }
    return "abort";
}

ControlAction parse_control(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "pause") return ControlAction::Pause;
    if (v == "resume") return ControlAction::Resume;
    if (v == "abort") return ControlAction::Abort;
    fail(ErrorCode::InvalidArgument, "unknown control action '" + std::string(s) + "'");
}

// ---- feedback channel ------------------------------------------------------

void FeedbackChannel::post(FeedbackMessage message) {
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(message));
        ++enqueued_;
    }
    cv_.notify_all();
}

void FeedbackChannel::control(ControlAction action) {
    {
        std::lock_guard lock(mutex_);
        switch (action) {
        case ControlAction::Pause: paused_ = true; break;
        case ControlAction::Resume: paused_ = false; break;
        case ControlAction::Abort: aborted_ = true; break;
        }
    }
    cv_.notify_all();
}

FeedbackChannel::WaitResult FeedbackChannel::wait(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    const bool ready = cv_.wait_for(lock, timeout, [&] { return aborted_ || !queue_.empty(); });
    if (aborted_) return {WaitStatus::Aborted, std::nullopt};
    if (!ready) return {WaitStatus::TimedOut, std::nullopt};
    auto msg = std::move(queue_.front());
    queue_.pop_front();
    return {WaitStatus::Delivered, std::move(msg)};
}

std::vector<FeedbackMessage> FeedbackChannel::drain() {
    std::lock_guard lock(mutex_);
    std::vector<FeedbackMessage> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
}

bool FeedbackChannel::checkpoint() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return aborted_ || !paused_; });
    return !aborted_;
}

bool FeedbackChannel::aborted() const {
    std::lock_guard lock(mutex_);
    return aborted_;
}

bool FeedbackChannel::paused() const {
    std::lock_guard lock(mutex_);
    return paused_;
}

void FeedbackChannel::set_awaiting(bool v) {
    std::lock_guard lock(mutex_);
    awaiting_ = v;
}

bool FeedbackChannel::awaiting() const {
    std::lock_guard lock(mutex_);
    return awaiting_;
}

std::size_t FeedbackChannel::enqueued() const {
    std::lock_guard lock(mutex_);
    return enqueued_;
}

// ---- memory sink -------------------------------------------------------------

std::uint64_t MemoryTrace::append(EventKind kind, json payload) {
    std::lock_guard lock(mutex_);
    TraceEvent ev;
    ev.seq = events_.size() + 1;
    ev.ts = clock_();
    ev.kind = kind;
    ev.payload = std::move(payload);
    events_.push_back(std::move(ev));
    return events_.back().seq;
}

void MemoryTrace::update_state(const RunState& state) {
    std::lock_guard lock(mutex_);
    state_ = state;
}

std::vector<TraceEvent> MemoryTrace::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

RunState MemoryTrace::state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

// ---- run store -----------------------------------------------------------------

struct RunStore::Live {
    std::mutex mutex;
    std::condition_variable cv;
    std::unique_ptr<TraceLog> log;
    std::shared_ptr<FeedbackChannel> channel;
    std::uint64_t version = 0;
};

namespace {

bool valid_run_id(std::string_view id) {
    if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    });
}

class StoreSink : public TraceSink {
public:
    StoreSink(RunStore& store, std::string run_id) : store_(store), run_id_(std::move(run_id)) {}
    std::uint64_t append(EventKind kind, json payload) override {
        return store_.append_event(run_id_, kind, std::move(payload));
    }
    void update_state(const RunState& state) override { store_.update_state(run_id_, state); }

private:
    RunStore& store_;
    std::string run_id_;
};

} // namespace

RunStore::RunStore(fs::path runs_dir, Clock clock) : runs_dir_(std::move(runs_dir)), clock_(std::move(clock)) {
    std::error_code ec;
    fs::create_directories(runs_dir_, ec);
    if (ec) fail(ErrorCode::StorageError, "cannot create runs directory " + runs_dir_.string() + ": " + ec.message());
}

RunStore::~RunStore() = default;

fs::path RunStore::run_dir(const std::string& run_id) const {
    if (!valid_run_id(run_id)) fail(ErrorCode::UnknownRun, "invalid run id '" + run_id + "'");
    return runs_dir_ / run_id;
}

bool RunStore::has_run(const std::string& run_id) const {
    return valid_run_id(run_id) && fs::is_regular_file(runs_dir_ / run_id / "run.json");
}

RunStore::Live& RunStore::live(const std::string& run_id) const {
    if (!has_run(run_id)) fail(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    std::lock_guard lock(mutex_);
    auto& slot = live_[run_id];
    if (!slot) slot = std::make_unique<Live>();
    return *slot;
}

void RunStore::write_record(const RunRecord& rec) const {
    write_atomic(runs_dir_ / rec.state.run_id / "run.json", dump(rec.to_json(), 2) + "\n");
}

std::string RunStore::create_run(const std::string& task, json config, std::string run_id) {
    if (run_id.empty()) {
        static std::mutex id_mutex;
        std::lock_guard lock(id_mutex);
        std::random_device rd;
        std::uniform_int_distribution<unsigned> dist(0, 0xffffff);
        do {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%06x", dist(rd));
            run_id = "run-" + std::string(buf);
        } while (fs::exists(runs_dir_ / run_id));
    }
    if (!valid_run_id(run_id)) fail(ErrorCode::InvalidArgument, "invalid run id '" + run_id + "'");
    const auto dir = runs_dir_ / run_id;
    std::error_code ec;
    if (!fs::create_directory(dir, ec)) {
        if (ec) fail(ErrorCode::StorageError, "cannot create run directory " + dir.string() + ": " + ec.message());
        fail(ErrorCode::InvalidArgument, "run id '" + run_id + "' is already taken");
    }
    RunRecord rec;
    rec.state.run_id = run_id;
    rec.task = task;
    rec.created = rec.updated = clock_();
    rec.config = std::move(config);
    write_record(rec);
    auto& l = live(run_id);
    std::lock_guard lock(l.mutex);
    l.log = std::make_unique<TraceLog>(dir / "trace.log", clock_);
    return run_id;
}

std::uint64_t RunStore::append_event(const std::string& run_id, EventKind kind, json payload) {
    auto& l = live(run_id);
    std::uint64_t seq;
    {
        std::lock_guard lock(l.mutex);
        if (!l.log) l.log = std::make_unique<TraceLog>(run_dir(run_id) / "trace.log", clock_);
        seq = l.log->append(kind, std::move(payload));
        ++l.version;
    }
    l.cv.notify_all();
    return seq;
}

void RunStore::update_state(const std::string& run_id, const RunState& state) {
    auto& l = live(run_id);
    {
        std::lock_guard lock(l.mutex);
        auto rec = get_run(run_id);
        rec.state = state;
        rec.state.run_id = run_id;
        rec.updated = clock_();
        write_record(rec);
        ++l.version;
    }
    l.cv.notify_all();
}

RunRecord RunStore::get_run(const std::string& run_id) const {
    if (!has_run(run_id)) fail(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    const auto path = runs_dir_ / run_id / "run.json";
    auto j = json::parse(text::read_file(path.string()), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::StorageError, "corrupt run record " + path.string());
    try {
        return RunRecord::from_json(j);
    } catch (const std::exception& e) {
        fail(ErrorCode::StorageError, "corrupt run record " + path.string() + ": " + e.what());
    }
}

std::vector<RunRecord> RunStore::list_runs() const {
    std::vector<RunRecord> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(runs_dir_, ec)) {
        const auto id = entry.path().filename().string();
        if (!has_run(id)) continue;
        try {
            out.push_back(get_run(id));
        } catch (const Error&) {
        }
    }
    std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.created != b.created) return a.created < b.created;
        return a.state.run_id < b.state.run_id;
    });
    return out;
}

std::vector<TraceEvent> RunStore::read_events(const std::string& run_id, std::uint64_t from_seq) const {
    if (!has_run(run_id)) fail(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    auto all = read_trace(runs_dir_ / run_id / "trace.log").events;
    std::vector<TraceEvent> out;
    for (auto& e : all)
        if (e.seq >= from_seq) out.push_back(std::move(e));
    return out;
}

void RunStore::stream_events(const std::string& run_id, std::uint64_t from_seq,
                             const std::function<bool(const TraceEvent&)>& sink,
                             const std::function<bool()>& should_stop) const {
    auto& l = live(run_id);
    const auto path = runs_dir_ / run_id / "trace.log";
    std::uint64_t offset = 0, next_seq = 1;
    for (;;) {
        std::uint64_t seen_version;
        {
            std::lock_guard lock(l.mutex);
            seen_version = l.version;
        }
        const bool terminal = is_terminal(get_run(run_id).state.outcome);
        auto chunk = read_from(path, offset, next_seq);
        offset = chunk.valid_bytes;
        for (const auto& ev : chunk.events) {
            next_seq = ev.seq + 1;
            if (ev.seq < from_seq) continue;
            if (!sink(ev)) return;
        }
        if (terminal && chunk.events.empty()) return;
        if (!chunk.events.empty()) continue;
        if (should_stop && should_stop()) return;
        std::unique_lock lock(l.mutex);
        l.cv.wait_for(lock, std::chrono::milliseconds(200), [&] { return l.version != seen_version; });
    }
}

void RunStore::attach(const std::string& run_id, std::shared_ptr<FeedbackChannel> channel) {
    auto& l = live(run_id);
    std::lock_guard lock(l.mutex);
    l.channel = std::move(channel);
}

void RunStore::detach(const std::string& run_id) {
    auto& l = live(run_id);
    std::lock_guard lock(l.mutex);
    l.channel.reset();
}

std::uint64_t RunStore::post_feedback(const FeedbackMessage& message) {
    if (text::trim(message.text).empty()) fail(ErrorCode::InvalidArgument, "feedback text is empty");
    auto& l = live(message.run_id);
    const auto rec = get_run(message.run_id);
    if (is_terminal(rec.state.outcome))
        fail(ErrorCode::RunTerminal, "run '" + message.run_id + "' already finished (" +
                                         std::string(outcome_name(rec.state.outcome)) + ")");
    std::shared_ptr<FeedbackChannel> channel;
    {
        std::lock_guard lock(l.mutex);
        channel = l.channel;
    }
    if (!channel) fail(ErrorCode::RunNotAttached, "run '" + message.run_id + "' is not driven by this process");
    const auto seq = append_event(message.run_id, EventKind::Feedback, message.to_json());
    channel->post(message);
    return seq;
}

std::uint64_t RunStore::control(const std::string& run_id, ControlAction action) {
    auto& l = live(run_id);
    const auto rec = get_run(run_id);
    if (is_terminal(rec.state.outcome))
        fail(ErrorCode::RunTerminal, "run '" + run_id + "' already finished (" +
                                         std::string(outcome_name(rec.state.outcome)) + ")");
    std::shared_ptr<FeedbackChannel> channel;
    {
        std::lock_guard lock(l.mutex);
        channel = l.channel;
    }
    if (!channel) fail(ErrorCode::RunNotAttached, "run '" + run_id + "' is not driven by this process");
    const auto seq = append_event(run_id, EventKind::Control, {{"action", control_name(action)}});
    channel->control(action);
    return seq;
}

std::unique_ptr<TraceSink> RunStore::sink(const std::string& run_id) {
    live(run_id);
    return std::make_unique<StoreSink>(*this, run_id);
}

} // namespace autoresearch::store
