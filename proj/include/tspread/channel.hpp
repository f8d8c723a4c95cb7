#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "tspread/common.hpp"

namespace tspread {

/// Radio parameters shared by every user in a cell. Power spectral densities in W/MHz.
struct ChannelConfig {
    double bandwidth_hz = 1.4e6;
    double tx_psd = 0.1 / 1.4;
    double noise_psd = 1e-8 / 1.4;
    double path_loss_exponent = 3.0;
    double slot_s = 0.01;
    double doppler_hz = 5.0;
    int num_states = 8;

    void validate() const;
};

struct ChannelState {
    double probability;
    double snr;       // linear
    double rate_bps;
};

/// Discrete per-user channel: K states with stationary probabilities and achievable rates.
/// Immutable after construction.
class ChannelModel {
public:
    /// Validates the states: probabilities sum to one, rates match the snr of each state.
    ChannelModel(double distance_m, double bandwidth_hz, std::vector<ChannelState> states);

    /// Two-state channel: off (rate 0) with probability 1 - p_on, on at `snr_on`.
    static ChannelModel on_off(double p_on, double bandwidth_hz, double snr_on);

    double distance_m() const { return distance_m_; }
    double bandwidth_hz() const { return bandwidth_hz_; }
    int num_states() const { return static_cast<int>(states_.size()); }
    std::span<const ChannelState> states() const { return states_; }
    const ChannelState& state(int k) const { return states_[static_cast<std::size_t>(k)]; }
    double rate(int k) const { return states_[static_cast<std::size_t>(k)].rate_bps; }

    /// E[R] over the stationary distribution (bits/s).
    double mean_rate() const;
    double mean_snr() const;

    /// Inverse-CDF draw from the stationary distribution given u in [0, 1).
    int sample(double u) const {
        if (equal_bins_) return std::min(static_cast<int>(u * static_cast<double>(cdf_.size())), num_states() - 1);
        return sample_cdf(u);
    }

private:
    double distance_m_;
    double bandwidth_hz_;
    std::vector<ChannelState> states_;
    std::vector<double> cdf_;
    bool equal_bins_ = false;

    int sample_cdf(double u) const;
};

/// How channel states evolve from slot to slot.
struct FadingProcess {
    enum class Kind { iid, gauss_markov };

    Kind kind = Kind::iid;
    double correlation = 0.0;  // stay probability, ignored for iid

    static FadingProcess iid() { return {}; }
    /// Stay probability exp(-2*pi*doppler*slot).
    static FadingProcess gauss_markov(const ChannelConfig& config);
    static FadingProcess with_correlation(double correlation);

    double effective_correlation() const { return kind == Kind::iid ? 0.0 : correlation; }
};

/// Linear mean SNR at `distance_m`: (tx_psd / noise_psd) * d^-exponent.
double mean_snr(const ChannelConfig& config, double distance_m);

/// Achievable rate with a 3 dB gap to capacity: B * log2(1 + snr / 2).
double rate_from_snr(double bandwidth_hz, double snr);

/// Equal-probability quantization of the exponential (Rayleigh power) SNR distribution.
/// Each bin is represented by its conditional mean, so the mean SNR is preserved.
ChannelModel discretize(const ChannelConfig& config, double distance_m);

int next_state(const FadingProcess& process, const ChannelModel& model, int current, Rng& rng);

/// Advances `steps` slots at once. For the stay/redraw chain the state survives
/// with probability correlation^steps, otherwise it is a fresh stationary draw.
int advance_state(const FadingProcess& process, const ChannelModel& model, int current,
                  long long steps, Rng& rng);

}  // namespace tspread
