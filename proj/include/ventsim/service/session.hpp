#pragma once

#include "ventsim/breath/plans.hpp"
#include "ventsim/json.hpp"
#include "ventsim/labeling/labels.hpp"
#include "ventsim/rng.hpp"
#include "ventsim/solver/simulation.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ventsim::service {

inline constexpr double kFrameInterval = 0.05; // s wall clock, 20 frames/s
inline constexpr double kMinSpeed = 0.25;
inline constexpr double kMaxSpeed = 4.0;
// Fixed segmentation options so labels finalized live equal an offline pass
// over the same events.
inline constexpr SegmentOptions kStreamSegmentation{0.3, 4.0};

struct SessionParams {
    ArchetypeId archetype = ArchetypeId::Healthy;
    VentilatorSettings settings{};
    double rate = 15.0;   // breaths/min
    double jitter = 0.05; // fractional std of the breath interval
    EffortShape effort{};
    CardiacParams cardiac{};
    double speed = 1.0;
    std::optional<AsynchronyDistribution> distribution; // all Normal when absent
    std::uint64_t seed = 1;

    void validate() const; // ValidationError
};

Json to_json(const SessionParams& p);

/// Create request: every key optional; archetype defaults pick the matching
/// effort profile and cycle fraction. Throws NotFoundError for an unknown
/// archetype, ConfigError/ValidationError for bad values.
SessionParams parse_session_request(const Json& j);

/// Partial update over `base`. Changing the archetype adopts its effort
/// profile and cycle fraction unless the patch sets them too.
SessionParams merge_session_params(const SessionParams& base, const Json& patch);

Json label_json(const BreathLabel& l);

/// Bounded outgoing queue of one stream consumer. Pushing into a full queue
/// closes it instead of blocking the producer.
class Subscription {
public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    bool push(std::string msg);
    /// Control replies bypass the capacity limit.
    void push_reply(std::string msg);
    /// Next message, or nothing on timeout or once closed and drained.
    std::optional<std::string> pop(std::chrono::milliseconds timeout);
    void close(std::string reason);
    bool closed() const;
    std::string close_reason() const;

private:
    mutable std::mutex m_;
    std::condition_variable cv_;
    std::deque<std::string> q_;
    std::size_t capacity_;
    bool closed_ = false;
    std::string reason_;
};

/// Length-prefixed wire message: decimal byte length, ':', JSON text.
std::string encode_message(const Json& j);
/// Accepts a prefixed message or bare JSON. Throws ValidationError.
Json decode_message(const std::string& s);

/// One live simulation. step() advances by one frame and returns the frame;
/// start() runs it on its own thread, paced against the wall clock.
class Session {
public:
    Session(std::string id, SessionParams params);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }
    Json describe() const;

    /// Validates synchronously, applies at the next frame. Returns the
    /// acknowledged parameters and the revision frames will carry once applied.
    Json update(const Json& patch);
    /// class must be EC, LC, DI or IE; applies to the next effort that has
    /// not begun. Repeated injections queue onto consecutive efforts.
    Json inject(AsynchronyClass c);
    void pause();
    void resume();

    std::shared_ptr<Subscription> subscribe(std::size_t capacity = 40);

    /// Advances the simulation by one frame interval (scaled by speed) unless
    /// paused, and returns the frame. Thread-compatible with the control calls.
    Json step();
    /// Every event and finalized label so far (for offline cross-checks).
    std::vector<SimEvent> events() const;
    std::vector<BreathLabel> labels() const;
    std::vector<AsynchronyClass> intents() const;

    void start();
    void stop();

private:
    struct Pending {
        std::optional<SessionParams> params;
        std::uint64_t rev = 0;
        std::deque<AsynchronyClass> injections;
        std::optional<bool> running;
    };

    void apply_pending(Pending& p);
    void schedule_efforts(double until);
    void finalize_labels(Json& out);
    void broadcast(const std::string& msg);
    void run();

    std::string id_;
    mutable std::mutex control_m_; // guards params_, rev_, pending_, running_
    SessionParams params_;        // acknowledged
    std::uint64_t rev_ = 0;       // acknowledged revision
    Pending pending_;
    bool running_ = true;

    // owned by the stepping thread
    mutable std::mutex sim_m_;
    Simulation sim_;
    SessionParams active_;
    std::uint64_t applied_rev_ = 0;
    std::optional<ArchetypeId> pending_archetype_;
    std::deque<AsynchronyClass> injections_;
    Rng rng_;
    double next_onset_ = 0;
    std::uint64_t seq_ = 0;
    double last_t_ = 0;
    std::vector<SimEvent> events_;
    std::vector<AsynchronyClass> intents_;
    std::vector<BreathLabel> labels_;
    std::size_t finalized_ = 0;
    bool events_changed_ = false;

    std::mutex subs_m_;
    std::vector<std::weak_ptr<Subscription>> subs_;

    std::thread thread_;
    std::mutex stop_m_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
};

} // namespace ventsim::service
