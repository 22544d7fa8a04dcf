#include "ventsim/service/session.hpp"

#include "ventsim/datagen/config.hpp"
#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>

namespace ventsim::service {

namespace {

double number(const Json& v, const std::string& path)
{
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    return v.get<double>();
}

Json nullable(const std::optional<double>& v)
{
    if (!v) return nullptr;
    return *v;
}

Json optional_class(const std::optional<AsynchronyClass>& c)
{
    if (!c) return nullptr;
    return std::string(to_string(*c));
}

std::string_view event_name(EventKind k)
{
    switch (k) {
    case EventKind::EffortStart: return "effort_start";
    case EventKind::EffortEnd: return "effort_end";
    case EventKind::Trigger: return "trigger";
    case EventKind::Cycle: return "cycle";
    }
    return "";
}

SessionParams with_archetype(SessionParams p, ArchetypeId id)
{
    p.archetype = id;
    const auto prof = default_profile(id);
    p.effort = prof.effort;
    p.settings.cycle_fraction = prof.cycle_fraction;
    return p;
}

} // namespace

void SessionParams::validate() const
{
    settings.validate();
    effort.validate();
    if (!(rate >= 5.0 && rate <= 40.0)) throw ValidationError("rate must be in [5, 40] breaths/min");
    if (!(jitter >= 0 && jitter < 0.3)) throw ValidationError("jitter must be in [0, 0.3)");
    if (60.0 / rate * (1.0 - 3.0 * jitter) < effort.duration() + 0.1) {
        throw ValidationError("breath period too short for the effort duration");
    }
    if (!(speed >= kMinSpeed && speed <= kMaxSpeed)) {
        throw ValidationError("speed must be in [0.25, 4]");
    }
    if (!(cardiac.amplitude >= 0) || !(cardiac.heart_rate > 0)) {
        throw ValidationError("cardiac amplitude must be >= 0 and heart_rate > 0");
    }
}

Json to_json(const SessionParams& p)
{
    return Json{{"archetype", std::string(to_string(p.archetype))},
                {"settings", ventsim::to_json(p.settings)},
                {"breathing", Json{{"rate", p.rate}, {"jitter", p.jitter}, {"effort", effort_json(p.effort)}}},
                {"cardiac", Json{{"amplitude", p.cardiac.amplitude}, {"heart_rate", p.cardiac.heart_rate}}},
                {"speed", p.speed},
                {"asynchrony", p.distribution ? ventsim::to_json(*p.distribution) : Json("normal")},
                {"seed", p.seed}};
}

SessionParams merge_session_params(const SessionParams& base, const Json& patch)
{
    if (!patch.is_object()) throw ConfigError("expected an object");
    SessionParams p = base;
    if (const auto it = patch.find("archetype"); it != patch.end()) {
        if (!it->is_string()) throw ConfigError("archetype: expected a string");
        const auto id = parse_archetype(it->get<std::string>());
        if (!id) throw NotFoundError("unknown archetype '" + it->get<std::string>() + "'");
        if (*id != p.archetype) p = with_archetype(p, *id);
    }
    for (const auto& [key, v] : patch.items()) {
        if (key == "archetype") continue;
        if (key == "settings") {
            p.settings = merge_settings(p.settings, v);
        } else if (key == "breathing") {
            if (!v.is_object()) throw ConfigError("breathing: expected an object");
            for (const auto& [k, x] : v.items()) {
                if (k == "rate") p.rate = number(x, "breathing.rate");
                else if (k == "jitter") p.jitter = number(x, "breathing.jitter");
                else if (k == "effort") p.effort = merge_effort(p.effort, x, "breathing.effort");
                else throw ConfigError("breathing: unknown key '" + k + "'");
            }
        } else if (key == "cardiac") {
            if (!v.is_object()) throw ConfigError("cardiac: expected an object");
            for (const auto& [k, x] : v.items()) {
                if (k == "amplitude") p.cardiac.amplitude = number(x, "cardiac.amplitude");
                else if (k == "heart_rate") p.cardiac.heart_rate = number(x, "cardiac.heart_rate");
                else throw ConfigError("cardiac: unknown key '" + k + "'");
            }
        } else if (key == "speed") {
            p.speed = number(v, "speed");
        } else if (key == "asynchrony") {
            if (v == "normal") p.distribution.reset();
            else if (v == "default") p.distribution = default_distribution(p.archetype);
            else p.distribution = parse_distribution(v);
        } else if (key == "seed") {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("seed: expected a non-negative integer");
            p.seed = v.get<std::uint64_t>();
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
    p.validate();
    return p;
}

SessionParams parse_session_request(const Json& j)
{
    if (!j.is_object()) throw ConfigError("expected an object");
    auto id = ArchetypeId::Healthy;
    if (const auto it = j.find("archetype"); it != j.end()) {
        if (!it->is_string()) throw ConfigError("archetype: expected a string");
        const auto parsed = parse_archetype(it->get<std::string>());
        if (!parsed) throw NotFoundError("unknown archetype '" + it->get<std::string>() + "'");
        id = *parsed;
    }
    SessionParams base = with_archetype(SessionParams{}, id);
    Json rest = j;
    rest.erase("archetype");
    return merge_session_params(base, rest);
}

Json label_json(const BreathLabel& l)
{
    return Json{{"breath_idx", l.breath_idx},
                {"t_insp_start", l.t_insp_start},
                {"t_insp_end", l.t_insp_end},
                {"t_trigger", nullable(l.t_trigger)},
                {"t_cycle", nullable(l.t_cycle)},
                {"start_delay_ms", nullable(l.start_delay_ms)},
                {"end_delay_ms", nullable(l.end_delay_ms)},
                {"class", std::string(to_string(l.cls))},
                {"intent", optional_class(l.intent)}};
}

// ---------------------------------------------------------------------------

bool Subscription::push(std::string msg)
{
    {
        std::lock_guard l(m_);
        if (closed_) return false;
        if (q_.size() >= capacity_) {
            closed_ = true;
            reason_ = "slow consumer";
            q_.clear();
        } else {
            q_.push_back(std::move(msg));
        }
    }
    cv_.notify_all();
    return !closed();
}

void Subscription::push_reply(std::string msg)
{
    {
        std::lock_guard l(m_);
        if (closed_) return;
        q_.push_back(std::move(msg));
    }
    cv_.notify_all();
}

std::optional<std::string> Subscription::pop(std::chrono::milliseconds timeout)
{
    std::unique_lock l(m_);
    cv_.wait_for(l, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    auto s = std::move(q_.front());
    q_.pop_front();
    return s;
}

void Subscription::close(std::string reason)
{
    {
        std::lock_guard l(m_);
        if (closed_) return;
        closed_ = true;
        reason_ = std::move(reason);
    }
    cv_.notify_all();
}

bool Subscription::closed() const
{
    std::lock_guard l(m_);
    return closed_;
}

std::string Subscription::close_reason() const
{
    std::lock_guard l(m_);
    return reason_;
}

std::string encode_message(const Json& j)
{
    const std::string body = j.dump();
    return std::to_string(body.size()) + ":" + body;
}

Json decode_message(const std::string& s)
{
    std::string_view body = s;
    const auto colon = s.find(':');
    if (colon != std::string::npos && colon > 0 &&
        std::all_of(s.begin(), s.begin() + static_cast<long>(colon), [](char c) { return c >= '0' && c <= '9'; })) {
        const std::size_t n = std::stoul(s.substr(0, colon));
        body = std::string_view(s).substr(colon + 1);
        if (body.size() != n) throw ValidationError("message length prefix does not match its body");
    }
    try {
        return Json::parse(body);
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("malformed message: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

namespace {

SimulationSetup setup_for(const SessionParams& p)
{
    SimulationSetup s;
    s.patient = archetype(p.archetype);
    s.settings = p.settings;
    s.cardiac = p.cardiac;
    return s;
}

} // namespace

Session::Session(std::string id, SessionParams params)
    : id_(std::move(id)), params_(params), sim_((params.validate(), setup_for(params))), active_(params),
      rng_(mix_seed(params.seed, 1))
{
    next_onset_ = 0.5 * 60.0 / params.rate;
}

Session::~Session() { stop(); }

Json Session::describe() const
{
    std::lock_guard l(control_m_);
    return Json{{"id", id_}, {"params", to_json(params_)}, {"rev", rev_}, {"running", running_}};
}

Json Session::update(const Json& patch)
{
    std::lock_guard l(control_m_);
    const SessionParams merged = merge_session_params(params_, patch); // throws, state unchanged
    params_ = merged;
    ++rev_;
    pending_.params = merged;
    pending_.rev = rev_;
    return Json{{"params", to_json(params_)}, {"rev", rev_}};
}

Json Session::inject(AsynchronyClass c)
{
    using C = AsynchronyClass;
    if (c != C::EarlyCycling && c != C::LateCycling && c != C::DelayedInspiration &&
        c != C::IneffectiveEffort) {
        throw ValidationError("only EC, LC, DI and IE can be injected");
    }
    std::lock_guard l(control_m_);
    pending_.injections.push_back(c);
    return Json{{"accepted", true}, {"class", std::string(to_string(c))}};
}

void Session::pause()
{
    std::lock_guard l(control_m_);
    running_ = false;
    pending_.running = false;
}

void Session::resume()
{
    std::lock_guard l(control_m_);
    running_ = true;
    pending_.running = true;
}

std::shared_ptr<Subscription> Session::subscribe(std::size_t capacity)
{
    auto s = std::make_shared<Subscription>(capacity);
    std::lock_guard l(subs_m_);
    subs_.push_back(s);
    return s;
}

void Session::apply_pending(Pending& p)
{
    if (p.params) {
        const SessionParams& n = *p.params;
        if (n.archetype != active_.archetype) pending_archetype_ = n.archetype;
        sim_.update_settings(n.settings);
        sim_.set_cardiac(n.cardiac);
        const auto keep = active_.archetype;
        active_ = n;
        active_.archetype = keep; // switched at the next breath boundary
        applied_rev_ = p.rev;
    }
    for (auto c : p.injections) injections_.push_back(c);
}

void Session::schedule_efforts(double until)
{
    // Efforts enter the simulation only once their onset is inside the frame
    // being computed, so an effort that is not yet in the simulation has not
    // begun and still takes queued injections.
    while (next_onset_ <= until) {
        const std::size_t i = sim_.effort_count();
        BreathOverride o;
        if (!injections_.empty()) {
            o = override_for(injections_.front());
            injections_.pop_front();
        } else if (active_.distribution) {
            BreathPlan one;
            one.onsets = {next_onset_};
            one.shapes = {active_.effort};
            o = build_asynchrony_plan(one, active_.archetype, active_.distribution,
                                      mix_seed(active_.seed, 1000 + i))
                    .breaths.front();
        }
        sim_.add_effort(next_onset_, active_.effort, o);
        intents_.push_back(o.intent);
        double z = 0;
        if (active_.jitter > 0) {
            do z = rng_.normal();
            while (std::abs(z) > 3.0);
        }
        next_onset_ += 60.0 / active_.rate * (1.0 + active_.jitter * z);
        next_onset_ = std::max(next_onset_, sim_.effort_end(i) + 0.1);
    }
}

void Session::finalize_labels(Json& out)
{
    if (events_changed_) {
        // the newest effort may still be running: leave it out until it ends
        std::vector<SimEvent> complete = events_;
        std::size_t starts = 0, ends = 0;
        for (const auto& e : complete) {
            starts += e.kind == EventKind::EffortStart;
            ends += e.kind == EventKind::EffortEnd;
        }
        if (starts > ends) {
            for (auto it = complete.rbegin(); it != complete.rend(); ++it) {
                if (it->kind == EventKind::EffortStart) {
                    complete.erase(std::next(it).base());
                    break;
                }
            }
        }
        const Segmentation seg = segment_breaths(complete, kStreamSegmentation);
        std::vector<BreathLabel> all = label_breaths(seg, &intents_);
        std::vector<std::size_t> truncated = seg.truncated;
        events_changed_ = false;

        // effort i is final once effort i+1 has begun and its breath has cycled
        while (finalized_ + 1 < sim_.effort_count() &&
               sim_.time() >= sim_.effort_onset(finalized_ + 1) && finalized_ < starts) {
            if (std::find(truncated.begin(), truncated.end(), finalized_) != truncated.end()) break;
            const auto it = std::find_if(all.begin(), all.end(),
                                         [&](const BreathLabel& l) { return l.breath_idx == finalized_; });
            if (it != all.end()) {
                labels_.push_back(*it);
                out.push_back(label_json(*it));
            }
            ++finalized_;
        }
    }
}

Json Session::step()
{
    Pending p;
    bool running;
    {
        std::lock_guard l(control_m_);
        p = std::move(pending_);
        pending_ = Pending{};
        running = running_;
    }

    std::lock_guard l(sim_m_);
    apply_pending(p);

    Json frame{{"type", "frame"}, {"session", id_}, {"seq", seq_++}, {"rev", applied_rev_},
               {"running", running}, {"speed", active_.speed}};
    Json cols{{"t", Json::array()}, {"paw", Json::array()}, {"flow", Json::array()},
              {"vol", Json::array()}, {"pmus", Json::array()}, {"phase", Json::array()}};
    Json events = Json::array();
    Json labels = Json::array();

    if (running) {
        if (pending_archetype_ && sim_.controller().vent.phase == Phase::Expiration &&
            !sim_.controller().pending_trigger &&
            (sim_.effort_count() == 0 || sim_.time() >= sim_.effort_end(sim_.effort_count() - 1))) {
            sim_.reset_patient(archetype(*pending_archetype_));
            active_.archetype = *pending_archetype_;
            pending_archetype_.reset();
        }
        const double target = sim_.time() + kFrameInterval * active_.speed;
        schedule_efforts(target);
        sim_.advance_to(target);
        for (const auto& s : sim_.take_samples()) {
            cols["t"].push_back(s.t);
            cols["paw"].push_back(s.paw);
            cols["flow"].push_back(s.flow);
            cols["vol"].push_back(s.vol);
            cols["pmus"].push_back(s.pmus);
            cols["phase"].push_back(s.phase == Phase::Inspiration ? 1 : 0);
        }
        for (const auto& e : sim_.take_events()) {
            Json ev{{"kind", std::string(event_name(e.kind))}, {"t", e.t}};
            ev["effort"] = e.effort ? Json(*e.effort) : Json(nullptr);
            events.push_back(ev);
            events_.push_back(e);
            events_changed_ = true;
        }
        finalize_labels(labels);
    } else {
        frame["heartbeat"] = true;
    }
    frame["t0"] = last_t_;
    frame["t1"] = sim_.time();
    last_t_ = sim_.time();
    frame["archetype"] = std::string(to_string(active_.archetype));
    frame["samples"] = std::move(cols);
    frame["events"] = std::move(events);
    frame["labels"] = std::move(labels);
    return frame;
}

std::vector<SimEvent> Session::events() const
{
    std::lock_guard l(sim_m_);
    return events_;
}

std::vector<BreathLabel> Session::labels() const
{
    std::lock_guard l(sim_m_);
    return labels_;
}

std::vector<AsynchronyClass> Session::intents() const
{
    std::lock_guard l(sim_m_);
    return intents_;
}

void Session::broadcast(const std::string& msg)
{
    std::lock_guard l(subs_m_);
    std::erase_if(subs_, [&](const std::weak_ptr<Subscription>& w) {
        const auto s = w.lock();
        return !s || !s->push(msg);
    });
}

void Session::run()
{
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(kFrameInterval));
    auto next = clock::now();
    for (;;) {
        {
            std::unique_lock l(stop_m_);
            if (stop_cv_.wait_until(l, next, [&] { return stopping_; })) return;
        }
        next += period;
        try {
            broadcast(encode_message(step()));
        } catch (const Error& e) {
            pause();
            broadcast(encode_message(Json{{"type", "error"}, {"session", id_}, {"message", e.what()}}));
        }
    }
}

void Session::start()
{
    if (thread_.joinable()) return;
    thread_ = std::thread([this] { run(); });
}

void Session::stop()
{
    {
        std::lock_guard l(stop_m_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    std::lock_guard l(subs_m_);
    for (auto& w : subs_) {
        if (auto s = w.lock()) s->close("session closed");
    }
    subs_.clear();
}

} // namespace ventsim::service
