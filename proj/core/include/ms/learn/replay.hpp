#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "ms/learn/tensor.hpp"
#include "ms/rng.hpp"

namespace ms::learn {

template <typename T>
struct Batch {
  Mat<T> obs;
  Mat<T> act;
  Vec<T> reward;
  Mat<T> next_obs;
  Vec<T> done;  // 1 for terminal transitions

  Eigen::Index size() const { return obs.rows(); }
};

// Fixed-capacity ring of transitions. Storage grows on demand up to the
// capacity, then the oldest entry is overwritten.
template <typename T>
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int obs_dim, int act_dim, std::uint64_t seed)
      : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim), rng_(seed) {
    if (capacity == 0 || obs_dim <= 0 || act_dim <= 0) throw std::invalid_argument("ReplayBuffer: bad dimensions");
  }

  void push(std::span<const T> obs, std::span<const T> act, T reward, std::span<const T> next_obs, bool done) {
    if (obs.size() != static_cast<std::size_t>(obs_dim_) || next_obs.size() != static_cast<std::size_t>(obs_dim_) ||
        act.size() != static_cast<std::size_t>(act_dim_)) {
      throw std::invalid_argument("ReplayBuffer::push: transition dimensions mismatch");
    }
    std::lock_guard lock(mu_);
    std::size_t slot;
    if (size_ < capacity_) {
      slot = size_++;
      obs_.insert(obs_.end(), obs.begin(), obs.end());
      next_.insert(next_.end(), next_obs.begin(), next_obs.end());
      act_.insert(act_.end(), act.begin(), act.end());
      reward_.push_back(reward);
      done_.push_back(done ? T(1) : T(0));
    } else {
      slot = head_;
      std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(slot * obs_dim_));
      std::copy(next_obs.begin(), next_obs.end(), next_.begin() + static_cast<std::ptrdiff_t>(slot * obs_dim_));
      std::copy(act.begin(), act.end(), act_.begin() + static_cast<std::ptrdiff_t>(slot * act_dim_));
      reward_[slot] = reward;
      done_[slot] = done ? T(1) : T(0);
    }
    head_ = (slot + 1) % capacity_;
    ++pushed_;
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return pushed_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }

  // Storage slot of the i-th oldest live transition.
  std::size_t slot_of(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer: index out of range");
    return size_ < capacity_ ? i : (head_ + i) % capacity_;
  }
  T reward_at(std::size_t slot) const { return reward_.at(slot); }
  std::span<const T> obs_at(std::size_t slot) const {
    return {obs_.data() + slot * static_cast<std::size_t>(obs_dim_), static_cast<std::size_t>(obs_dim_)};
  }

  // n distinct slots, uniformly at random (Floyd's algorithm, then shuffled).
  std::vector<std::size_t> sample_slots(std::size_t n) {
    std::lock_guard lock(mu_);
    return sample_slots_locked(n);
  }

  Batch<T> sample(std::size_t n) {
    std::lock_guard lock(mu_);
    const std::vector<std::size_t> slots = sample_slots_locked(n);
    Batch<T> b;
    const auto rows = static_cast<Eigen::Index>(n);
    b.obs.resize(rows, obs_dim_);
    b.next_obs.resize(rows, obs_dim_);
    b.act.resize(rows, act_dim_);
    b.reward.resize(rows);
    b.done.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t s = slots[static_cast<std::size_t>(r)];
      std::copy_n(obs_.data() + s * obs_dim_, obs_dim_, b.obs.row(r).data());
      std::copy_n(next_.data() + s * obs_dim_, obs_dim_, b.next_obs.row(r).data());
      std::copy_n(act_.data() + s * act_dim_, act_dim_, b.act.row(r).data());
      b.reward(r) = reward_[s];
      b.done(r) = done_[s];
    }
    return b;
  }

 private:
  std::vector<std::size_t> sample_slots_locked(std::size_t n) {
    if (n == 0 || n > size_) throw std::invalid_argument("ReplayBuffer::sample: batch size must be in [1, size]");
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t j = size_ - n; j < size_; ++j) {
      const std::size_t t = static_cast<std::size_t>(rng_.below(j + 1));
      out.push_back(std::find(out.begin(), out.end(), t) == out.end() ? t : j);
    }
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[static_cast<std::size_t>(rng_.below(i))]);
    return out;
  }

  std::size_t capacity_;
  int obs_dim_;
  int act_dim_;
  Rng rng_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
  std::vector<T> obs_, next_, act_, reward_, done_;
  std::mutex mu_;
};

}  // namespace ms::learn
