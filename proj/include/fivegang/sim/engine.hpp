#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fivegang/errors.hpp"
#include "fivegang/sim/metrics.hpp"
#include "fivegang/sim/rng.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::sim {

using EntityId = std::uint32_t;
using EventKind = std::uint16_t;

struct Event
{
    SimTime fire_at;
    std::uint64_t seq = 0; // assigned by the engine
    EntityId target = 0;
    EventKind kind = 0;
    std::vector<std::uint8_t> payload;
};

class Engine;

class Entity
{
public:
    virtual ~Entity() = default;
    virtual void handle(Engine& engine, const Event& event) = 0;
};

/// Single-threaded discrete-event engine. Events run in (fire_at, seq)
/// order; seq is the scheduling order, so ties resolve first-come first-run.
class Engine
{
public:
    explicit Engine(std::uint64_t seed = 0) : seed_(seed) {}

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    EntityId add_entity(std::string name, std::unique_ptr<Entity> entity)
    {
        entities_.push_back(std::move(entity));
        names_.push_back(std::move(name));
        return static_cast<EntityId>(entities_.size() - 1);
    }

    template <class T, class... Args>
    T& emplace_entity(std::string name, Args&&... args)
    {
        auto e = std::make_unique<T>(std::forward<Args>(args)...);
        T& ref = *e;
        add_entity(std::move(name), std::move(e));
        return ref;
    }

    Entity& entity(EntityId id) { return *entities_.at(id); }
    const std::string& entity_name(EntityId id) const { return names_.at(id); }
    std::size_t entity_count() const { return entities_.size(); }

    std::uint64_t schedule(Event ev)
    {
        if (ev.fire_at < clock_)
            throw SchedulingInPast("event at " + std::to_string(ev.fire_at.us) + "us scheduled at clock " +
                                   std::to_string(clock_.us) + "us");
        if (ev.target >= entities_.size())
            throw std::out_of_range("event targets unknown entity " + std::to_string(ev.target));
        ev.seq = next_seq_++;
        const auto seq = ev.seq;
        queue_.push_back(std::move(ev));
        std::push_heap(queue_.begin(), queue_.end(), Later{});
        return seq;
    }

    std::uint64_t schedule_at(SimTime at, EntityId target, EventKind kind, std::vector<std::uint8_t> payload = {})
    {
        return schedule(Event{at, 0, target, kind, std::move(payload)});
    }

    std::uint64_t schedule_in(std::int64_t delay_us, EntityId target, EventKind kind,
                              std::vector<std::uint8_t> payload = {})
    {
        return schedule_at(clock_ + delay_us, target, kind, std::move(payload));
    }

    /// Executes every event with fire_at <= t, then sets the clock to t.
    MetricsSnapshot run_until(SimTime t)
    {
        if (t < clock_)
            throw SchedulingInPast("run_until target precedes the clock");
        while (!queue_.empty() && queue_.front().fire_at <= t) {
            std::pop_heap(queue_.begin(), queue_.end(), Later{});
            Event ev = std::move(queue_.back());
            queue_.pop_back();
            clock_ = ev.fire_at;
            ++executed_;
            if (trace_)
                trace_(ev);
            entities_[ev.target]->handle(*this, ev);
        }
        clock_ = t;
        return metrics_.snapshot(clock_);
    }

    SimTime now() const { return clock_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t executed() const { return executed_; }
    std::size_t pending() const { return queue_.size(); }

    /// Earliest pending fire time, if any.
    std::optional<SimTime> next_fire() const
    {
        if (queue_.empty())
            return std::nullopt;
        return queue_.front().fire_at;
    }

    RngStream stream(std::string_view entity_key) const { return RngStream(seed_, entity_key); }

    Metrics& metrics() { return metrics_; }
    const Metrics& metrics() const { return metrics_; }

    void set_trace(std::function<void(const Event&)> fn) { trace_ = std::move(fn); }

private:
    struct Later
    {
        bool operator()(const Event& a, const Event& b) const
        {
            if (a.fire_at != b.fire_at)
                return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    std::uint64_t seed_;
    SimTime clock_{};
    std::uint64_t next_seq_ = 0;
    std::uint64_t executed_ = 0;
    std::vector<Event> queue_;
    std::vector<std::unique_ptr<Entity>> entities_;
    std::vector<std::string> names_;
    Metrics metrics_;
    std::function<void(const Event&)> trace_;
};

} // namespace fivegang::sim
