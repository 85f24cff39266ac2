#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/errors.hpp"

namespace fivegang::cloud {

using codec::Bytes;

inline std::vector<std::string_view> split_topic(std::string_view t)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto slash = t.find('/', start);
        out.push_back(t.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start));
        if (slash == std::string_view::npos)
            break;
        start = slash + 1;
    }
    return out;
}

/// Publish topics: non-empty '/'-separated segments without wildcards.
inline void validate_topic(std::string_view t)
{
    if (t.empty())
        throw MalformedTopic("empty topic");
    for (auto seg : split_topic(t))
        if (seg.empty() || seg.find('+') != std::string_view::npos || seg.find('#') != std::string_view::npos)
            throw MalformedTopic("bad topic '" + std::string(t) + "'");
}

/// Filters may use '+' as a whole segment to match exactly one level.
inline void validate_filter(std::string_view f)
{
    if (f.empty())
        throw MalformedTopic("empty filter");
    for (auto seg : split_topic(f))
        if (seg.empty() || seg.find('#') != std::string_view::npos ||
            (seg.find('+') != std::string_view::npos && seg != "+"))
            throw MalformedTopic("bad filter '" + std::string(f) + "'");
}

inline bool topic_matches(std::string_view filter, std::string_view topic)
{
    std::size_t fi = 0, ti = 0;
    while (true) {
        const auto fe = filter.find('/', fi);
        const auto te = topic.find('/', ti);
        const auto fseg = filter.substr(fi, fe == std::string_view::npos ? std::string_view::npos : fe - fi);
        const auto tseg = topic.substr(ti, te == std::string_view::npos ? std::string_view::npos : te - ti);
        if (fseg != "+" && fseg != tseg)
            return false;
        if (fe == std::string_view::npos || te == std::string_view::npos)
            return fe == te;
        fi = fe + 1;
        ti = te + 1;
    }
}

/// Sliding record of the last 2^16 sequence numbers seen from one publisher.
/// Sequence numbers that fell out of the window are treated as already seen.
class SeenWindow
{
public:
    static constexpr std::uint64_t kSpan = 1u << 16;

    /// True when `seq` is new; marks it seen.
    bool insert(std::uint64_t seq)
    {
        if (!any_) {
            any_ = true;
            high_ = seq;
            set(seq);
            return true;
        }
        if (seq > high_) {
            if (seq - high_ >= kSpan)
                std::fill(bits_.begin(), bits_.end(), 0);
            else
                for (std::uint64_t s = high_ + 1; s <= seq; ++s)
                    clear(s);
            high_ = seq;
            set(seq);
            return true;
        }
        if (high_ - seq >= kSpan)
            return false;
        if (test(seq))
            return false;
        set(seq);
        return true;
    }

private:
    void set(std::uint64_t s) { bits_[(s % kSpan) / 64] |= std::uint64_t{1} << (s % 64); }
    void clear(std::uint64_t s) { bits_[(s % kSpan) / 64] &= ~(std::uint64_t{1} << (s % 64)); }
    bool test(std::uint64_t s) const { return (bits_[(s % kSpan) / 64] >> (s % 64)) & 1u; }

    bool any_ = false;
    std::uint64_t high_ = 0;
    std::vector<std::uint64_t> bits_ = std::vector<std::uint64_t>(kSpan / 64, 0);
};

struct Message
{
    std::string topic;
    Bytes payload;
    std::string publisher;
    std::uint64_t seq = 0;
};

/// In-simulator pub/sub broker with at-least-once intake and per-publisher
/// deduplication, so each subscription sees each unique message once.
class Broker
{
public:
    using SubscriptionId = std::size_t;

    SubscriptionId subscribe(std::string subscriber, std::string filter)
    {
        validate_filter(filter);
        subs_.push_back(Subscription{std::move(subscriber), std::move(filter), {}});
        return subs_.size() - 1;
    }

    /// Returns the number of subscriptions the message was delivered to.
    std::size_t publish(const std::string& topic, Bytes payload, const std::string& publisher, std::uint64_t seq)
    {
        validate_topic(topic);
        ++published_;
        if (!seen_[publisher].insert(seq)) {
            ++duplicates_;
            return 0;
        }
        std::size_t n = 0;
        for (auto& s : subs_)
            if (topic_matches(s.filter, topic)) {
                s.queue.push_back(Message{topic, payload, publisher, seq});
                ++n;
            }
        delivered_ += n;
        return n;
    }

    std::deque<Message>& queue(SubscriptionId id) { return subs_.at(id).queue; }

    std::vector<Message> drain(SubscriptionId id)
    {
        auto& q = subs_.at(id).queue;
        std::vector<Message> out(std::make_move_iterator(q.begin()), std::make_move_iterator(q.end()));
        q.clear();
        return out;
    }

    std::uint64_t published() const { return published_; }
    std::uint64_t duplicates() const { return duplicates_; }
    std::uint64_t delivered() const { return delivered_; }

    nlohmann::json to_json() const
    {
        nlohmann::json subs = nlohmann::json::array();
        for (const auto& s : subs_)
            subs.push_back({{"subscriber", s.subscriber}, {"filter", s.filter}, {"queued", s.queue.size()}});
        return {{"published", published_},
                {"duplicates", duplicates_},
                {"delivered", delivered_},
                {"publishers", seen_.size()},
                {"subscriptions", subs}};
    }

private:
    struct Subscription
    {
        std::string subscriber;
        std::string filter;
        std::deque<Message> queue;
    };
    std::vector<Subscription> subs_;
    std::map<std::string, SeenWindow> seen_;
    std::uint64_t published_ = 0;
    std::uint64_t duplicates_ = 0;
    std::uint64_t delivered_ = 0;
};

} // namespace fivegang::cloud
