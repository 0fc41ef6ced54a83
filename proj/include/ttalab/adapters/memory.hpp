#pragma once

#include <cmath>
#include <vector>

#include "ttalab/matrix.hpp"
#include "ttalab/rng.hpp"

namespace ttalab {

// Prediction-balanced reservoir: one classic reservoir (Algorithm R) per
// predicted class, each of capacity floor(total capacity / classes), so a
// temporally correlated stream still leaves a balanced memory.
class ReservoirBank {
public:
    ReservoirBank(int capacity, int classes)
        : per_class_(classes > 0 ? capacity / classes : 0),
          slots_(static_cast<std::size_t>(classes)),
          offers_(static_cast<std::size_t>(classes), 0) {}

    void offer(std::span<const double> x, int predicted_class, Rng& rng) {
        if (per_class_ <= 0) return;
        auto& pool = slots_[static_cast<std::size_t>(predicted_class)];
        const long seen = ++offers_[static_cast<std::size_t>(predicted_class)];
        if (static_cast<int>(pool.size()) < per_class_) {
            pool.emplace_back(x.begin(), x.end());
            return;
        }
        const int j = rng.below(static_cast<int>(seen));
        if (j < per_class_) {
            pool[static_cast<std::size_t>(j)].assign(x.begin(), x.end());
        }
    }

    bool empty() const noexcept { return size() == 0; }

    int size() const noexcept {
        int n = 0;
        for (const auto& pool : slots_) n += static_cast<int>(pool.size());
        return n;
    }

    std::vector<int> class_histogram() const {
        std::vector<int> counts(slots_.size(), 0);
        for (std::size_t c = 0; c < slots_.size(); ++c) {
            counts[c] = static_cast<int>(slots_[c].size());
        }
        return counts;
    }

    // All stored samples, deterministic order: class index, then slot index.
    Matrix snapshot(int dim) const {
        Matrix out(size(), dim);
        int r = 0;
        for (const auto& pool : slots_) {
            for (const auto& row : pool) {
                for (int j = 0; j < dim; ++j) out(r, j) = row[static_cast<std::size_t>(j)];
                ++r;
            }
        }
        return out;
    }

private:
    int per_class_;
    std::vector<std::vector<std::vector<double>>> slots_;
    std::vector<long> offers_;
};

// Category-balanced memory with timeliness and uncertainty (RoTTA's sampling
// rule): insertion evicts, within the most occupied class, the entry with the
// worst combined score of age and prediction entropy.
class CstuBank {
public:
    struct Entry {
        std::vector<double> x;
        int cls = 0;
        double uncertainty = 0.0;  // H / ln C
        long inserted_at = 0;
    };

    CstuBank(int capacity, int classes)
        : capacity_(capacity), classes_(classes), log_c_(std::log(static_cast<double>(classes))) {}

    void insert(std::span<const double> x, int predicted_class, double entropy) {
        if (capacity_ <= 0) return;
        Entry e;
        e.x.assign(x.begin(), x.end());
        e.cls = predicted_class;
        e.uncertainty = log_c_ > 0.0 ? entropy / log_c_ : 0.0;
        e.inserted_at = now_;
        entries_.push_back(std::move(e));
        if (static_cast<int>(entries_.size()) <= capacity_) return;

        // most occupied class, ties to the lowest id
        std::vector<int> counts(static_cast<std::size_t>(classes_), 0);
        for (const Entry& en : entries_) counts[static_cast<std::size_t>(en.cls)] += 1;
        int target = 0;
        for (int c = 1; c < classes_; ++c) {
            if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(target)]) target = c;
        }

        std::size_t worst = entries_.size();
        double worst_score = -1.0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].cls != target) continue;
            const double s = score(entries_[i]);
            if (s > worst_score) {
                worst_score = s;
                worst = i;
            }
        }
        entries_.erase(entries_.begin() + static_cast<long>(worst));
    }

    void tick() noexcept { ++now_; }
    bool empty() const noexcept { return entries_.empty(); }
    int size() const noexcept { return static_cast<int>(entries_.size()); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    double age_of(const Entry& e) const noexcept { return static_cast<double>(now_ - e.inserted_at); }

    std::vector<int> class_histogram() const {
        std::vector<int> counts(static_cast<std::size_t>(classes_), 0);
        for (const Entry& e : entries_) counts[static_cast<std::size_t>(e.cls)] += 1;
        return counts;
    }

    Matrix snapshot(int dim) const {
        Matrix out(size(), dim);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            for (int j = 0; j < dim; ++j) out(static_cast<int>(i), j) = entries_[i].x[static_cast<std::size_t>(j)];
        }
        return out;
    }

private:
    double score(const Entry& e) const noexcept {
        const double age = age_of(e);
        const double timeliness = 1.0 / (1.0 + std::exp(-age / capacity_));
        return timeliness + e.uncertainty;
    }

    int capacity_;
    int classes_;
    double log_c_;
    long now_ = 0;
    std::vector<Entry> entries_;
};

}  // namespace ttalab
