#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "fedcme/strategies.hpp"

namespace fedcme {

enum class MatchMode { Pairwise, ManyToOne };

// Lock-step exchange point for one round. Every matched client arrives once
// with its mid-training model; the last arrival performs all exchanges in
// ascending client-id order, then everyone is released. Pairwise mode swaps
// the chosen part between counterparts; many-to-one copies the counterpart's
// phase-one part (possibly into several clients).
class RendezvousBarrier final : public ExchangeBarrier {
public:
    // `partner` is indexed by client id, -1 meaning unmatched. Only clients
    // with a partner participate.
    RendezvousBarrier(std::vector<int> partner, SwapMode swap_mode, MatchMode match_mode,
                      std::chrono::milliseconds timeout = std::chrono::minutes(2));

    void exchange(int client_id, SplitModel& model) override;

    // Wake all waiters with a ProtocolError; called when another client in
    // the round fails so the barrier cannot complete.
    void abort(const std::string& reason);

    std::size_t expected_participants() const { return expected_; }

private:
    void perform_exchanges();

    std::vector<int> partner_;
    SwapMode swap_mode_;
    MatchMode match_mode_;
    std::chrono::milliseconds timeout_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<int, SplitModel*> arrived_;
    std::size_t expected_ = 0;
    bool released_ = false;
    bool aborted_ = false;
    std::string abort_reason_;
};

}  // namespace fedcme
