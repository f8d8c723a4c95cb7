#include "tspread/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tspread {

void ChannelConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidInput(std::string("channel.") + name + " must be positive and finite");
        }
    };
    positive(bandwidth_hz, "bandwidth_hz");
    positive(tx_psd, "tx_psd");
    positive(noise_psd, "noise_psd");
    if (!(path_loss_exponent >= 0.0) || !std::isfinite(path_loss_exponent)) {
        throw InvalidInput("channel.path_loss_exponent must be non-negative and finite");
    }
    positive(slot_s, "slot_s");
    positive(doppler_hz, "doppler_hz");
    if (num_states < 1) throw InvalidInput("channel.num_states must be >= 1");
}

ChannelModel::ChannelModel(double distance_m, double bandwidth_hz, std::vector<ChannelState> states)
    : distance_m_(distance_m), bandwidth_hz_(bandwidth_hz), states_(std::move(states)) {
    if (states_.empty()) throw InvalidInput("channel model needs at least one state");
    if (!(bandwidth_hz_ > 0.0)) throw InvalidInput("channel model bandwidth must be positive");
    double total = 0.0;
    for (const auto& s : states_) {
        if (!(s.probability >= 0.0 && s.probability <= 1.0)) {
            throw InvalidInput("channel state probability outside [0, 1]");
        }
        if (s.rate_bps != rate_from_snr(bandwidth_hz_, s.snr)) {
            throw InvalidInput("channel state rate does not match its snr");
        }
        total += s.probability;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "channel state probabilities sum to " << total;
        throw InvalidInput(msg.str());
    }
    for (std::size_t k = 1; k < states_.size(); ++k) {
        if (states_[k].snr < states_[k - 1].snr) throw InvalidInput("channel states must be sorted by snr");
    }
    cdf_.resize(states_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < states_.size(); ++k) {
        acc += states_[k].probability;
        cdf_[k] = acc;
    }
    cdf_.back() = 1.0;
    equal_bins_ = std::all_of(states_.begin(), states_.end(), [&](const ChannelState& st) {
        return st.probability == states_.front().probability;
    });
}

ChannelModel ChannelModel::on_off(double p_on, double bandwidth_hz, double snr_on) {
    if (!(p_on > 0.0 && p_on <= 1.0)) throw InvalidInput("on/off channel needs p_on in (0, 1]");
    std::vector<ChannelState> states;
    if (p_on < 1.0) states.push_back({1.0 - p_on, 0.0, 0.0});
    states.push_back({p_on, snr_on, rate_from_snr(bandwidth_hz, snr_on)});
    return ChannelModel(0.0, bandwidth_hz, std::move(states));
}

double ChannelModel::mean_rate() const {
    double m = 0.0;
    for (const auto& s : states_) m += s.probability * s.rate_bps;
    return m;
}

double ChannelModel::mean_snr() const {
    double m = 0.0;
    for (const auto& s : states_) m += s.probability * s.snr;
    return m;
}

int ChannelModel::sample_cdf(double u) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto k = static_cast<int>(it - cdf_.begin());
    return std::min(k, num_states() - 1);
}

FadingProcess FadingProcess::gauss_markov(const ChannelConfig& config) {
    return with_correlation(std::exp(-2.0 * std::numbers::pi * config.doppler_hz * config.slot_s));
}

FadingProcess FadingProcess::with_correlation(double correlation) {
    if (!(correlation >= 0.0 && correlation < 1.0)) throw InvalidInput("fading correlation must be in [0, 1)");
    return {Kind::gauss_markov, correlation};
}

double mean_snr(const ChannelConfig& config, double distance_m) {
    if (!(distance_m > 0.0)) throw InvalidInput("distance must be positive");
    return (config.tx_psd / config.noise_psd) * std::pow(distance_m, -config.path_loss_exponent);
}

double rate_from_snr(double bandwidth_hz, double snr) {
    if (snr < 0.0) throw InvalidInput("snr must be non-negative");
    return bandwidth_hz * std::log2(1.0 + snr / 2.0);
}

ChannelModel discretize(const ChannelConfig& config, double distance_m) {
    config.validate();
    const double mean = mean_snr(config, distance_m);
    const int K = config.num_states;
    const double p = 1.0 / K;

    // Bin k covers survival probabilities (1 - (k+1)/K, 1 - k/K]. For Exp(mean) the conditional
    // mean over [a, b] is mean + (a*S(a) - b*S(b)) / (S(a) - S(b)).
    std::vector<ChannelState> states;
    states.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const double surv_a = 1.0 - static_cast<double>(k) / K;
        const double surv_b = 1.0 - static_cast<double>(k + 1) / K;
        const double a = -mean * std::log(surv_a);
        const double tail_b = (k + 1 == K) ? 0.0 : -mean * std::log(surv_b) * surv_b;
        const double snr = mean + (a * surv_a - tail_b) / p;
        states.push_back({p, snr, rate_from_snr(config.bandwidth_hz, snr)});
    }
    return ChannelModel(distance_m, config.bandwidth_hz, std::move(states));
}

int next_state(const FadingProcess& process, const ChannelModel& model, int current, Rng& rng) {
    if (current < 0 || current >= model.num_states()) throw InvalidInput("channel state index out of range");
    if (process.kind == FadingProcess::Kind::gauss_markov && process.correlation > 0.0 &&
        uniform01(rng) < process.correlation) {
        return current;
    }
    return model.sample(uniform01(rng));
}

int advance_state(const FadingProcess& process, const ChannelModel& model, int current,
                  long long steps, Rng& rng) {
    if (steps <= 0) return current;
    if (process.kind == FadingProcess::Kind::gauss_markov && process.correlation > 0.0 &&
        uniform01(rng) < std::pow(process.correlation, static_cast<double>(steps))) {
        return current;
    }
    return model.sample(uniform01(rng));
}

}  // namespace tspread
