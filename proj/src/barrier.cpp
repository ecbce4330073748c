#include "fedcme/barrier.hpp"

#include "fedcme/errors.hpp"

namespace fedcme {

RendezvousBarrier::RendezvousBarrier(std::vector<int> partner, SwapMode swap_mode,
                                     MatchMode match_mode, std::chrono::milliseconds timeout)
    : partner_(std::move(partner)), swap_mode_(swap_mode), match_mode_(match_mode),
      timeout_(timeout) {
    for (int p : partner_) {
        if (p >= 0) ++expected_;
    }
}

void RendezvousBarrier::exchange(int client_id, SplitModel& model) {
    const std::size_t id = static_cast<std::size_t>(client_id);
    if (id >= partner_.size() || partner_[id] < 0) return;  // no counterpart assigned

    std::unique_lock<std::mutex> lock(mu_);
    if (aborted_) throw ProtocolError("exchange barrier: " + abort_reason_);
    if (!arrived_.emplace(client_id, &model).second) {
        throw ProtocolError("exchange barrier: duplicate arrival of client " +
                            std::to_string(client_id));
    }
    if (arrived_.size() == expected_) {
        perform_exchanges();
        released_ = true;
        cv_.notify_all();
        return;
    }
    if (!cv_.wait_for(lock, timeout_, [this] { return released_ || aborted_; })) {
        aborted_ = true;
        abort_reason_ = "timed out waiting for counterparts";
        cv_.notify_all();
        throw ProtocolError("exchange barrier: " + abort_reason_);
    }
    if (aborted_) throw ProtocolError("exchange barrier: " + abort_reason_);
}

void RendezvousBarrier::abort(const std::string& reason) {
    std::lock_guard<std::mutex> lock(mu_);
    if (released_ || aborted_) return;
    aborted_ = true;
    abort_reason_ = reason;
    cv_.notify_all();
}

// Called with mu_ held by the last arrival. Pairwise counterparts swap the
// selected part; many-to-one clients each receive a copy of their
// counterpart's phase-one part (sources snapshotted first so repeated
// targets all see pre-exchange state).
void RendezvousBarrier::perform_exchanges() {
    if (match_mode_ == MatchMode::Pairwise) {
        for (auto& [id, model] : arrived_) {
            const int j = partner_[static_cast<std::size_t>(id)];
            if (j <= id) continue;  // each pair swapped once, ascending order
            auto it = arrived_.find(j);
            if (it == arrived_.end()) {
                throw ProtocolError("exchange barrier: counterpart " + std::to_string(j) +
                                    " of client " + std::to_string(id) + " never arrived");
            }
            switch (swap_mode_) {
                case SwapMode::Classifier: swap_classifiers(*model, *it->second); break;
                case SwapMode::Extractor: swap_extractors(*model, *it->second); break;
                case SwapMode::Whole: swap_whole(*model, *it->second); break;
            }
        }
        return;
    }
    std::map<int, SplitModel> snapshot;
    for (const auto& [id, model] : arrived_) snapshot.emplace(id, *model);
    for (auto& [id, model] : arrived_) {
        const int j = partner_[static_cast<std::size_t>(id)];
        auto it = snapshot.find(j);
        if (it == snapshot.end()) {
            throw ProtocolError("exchange barrier: counterpart " + std::to_string(j) +
                                " of client " + std::to_string(id) + " never arrived");
        }
        switch (swap_mode_) {
            case SwapMode::Classifier: model->classifier = it->second.classifier; break;
            case SwapMode::Extractor: model->extractor = it->second.extractor; break;
            case SwapMode::Whole: *model = it->second; break;
        }
    }
}

}  // namespace fedcme
