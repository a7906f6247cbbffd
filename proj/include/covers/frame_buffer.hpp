#pragma once

#include "covers/observation.hpp"

#include <cstddef>
#include <deque>
#include <span>

namespace covers {

/// Initial frames of episodes, stored raw; features are computed at comparison time.
class FrameBuffer {
public:
    explicit FrameBuffer(std::size_t capacity = 512) : capacity_(capacity) {}

    void add(const Observation& obs) {
        if (capacity_ == 0) return;
        if (frames_.size() == capacity_) frames_.pop_front();
        frames_.push_back(obs);
    }
    void add_all(const FrameBuffer& other) {
        for (const auto& f : other.frames_) add(f);
    }
    void clear() { frames_.clear(); }

    std::size_t size() const { return frames_.size(); }
    bool empty() const { return frames_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<Observation>& frames() const { return frames_; }

private:
    std::size_t capacity_;
    std::deque<Observation> frames_;
};

}  // namespace covers
