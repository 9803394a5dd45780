#include "fepagent/signal.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>

#include "fepagent/error.hpp"
#include "fepagent/random.hpp"

namespace fep::signal {

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

void check_uniform_dim(const PoseSequence& seq) {
    const std::size_t d = seq.dim();
    for (const auto& f : seq.frames) {
        if (f.size() != d) throw InvalidArgument("pose sequence has frames of differing dimension");
    }
}

// Transposed direct form II biquad.
struct Biquad {
    double b0, b1, b2, a1, a2;
    double z1 = 0.0, z2 = 0.0;

    void settle(double x) {
        z1 = x * (1.0 - b0);
        z2 = x * (b2 - a2);
    }
    double step(double x) {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
};

Biquad butterworth_section(double k, double q) {
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad s{};
    s.b0 = k * k * norm;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (k * k - 1.0) * norm;
    s.a2 = (1.0 - k / q + k * k) * norm;
    return s;
}

void run_cascade(std::vector<double>& x, double k) {
    if (x.empty()) return;
    const double pi = std::numbers::pi;
    Biquad s1 = butterworth_section(k, 1.0 / (2.0 * std::cos(pi / 8.0)));
    Biquad s2 = butterworth_section(k, 1.0 / (2.0 * std::cos(3.0 * pi / 8.0)));
    s1.settle(x.front());
    s2.settle(x.front());
    for (double& v : x) v = s2.step(s1.step(v));
}

std::vector<double> filtfilt(const std::vector<double>& x, double k) {
    const std::size_t n = x.size();
    const std::size_t pad = std::min<std::size_t>(15, n > 0 ? n - 1 : 0);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    run_cascade(ext, k);
    std::reverse(ext.begin(), ext.end());
    run_cascade(ext, k);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace

PoseSequence remove_outliers(const PoseSequence& seq, double z_threshold) {
    if (seq.size() < 3) throw InvalidArgument("remove_outliers needs at least 3 frames");
    if (!(z_threshold > 0.0)) throw InvalidArgument("outlier threshold must be positive");
    check_uniform_dim(seq);

    PoseSequence out = seq;
    const std::size_t n = seq.size();
    const std::size_t d = seq.dim();
    std::vector<double> col(n);
    std::vector<bool> inlier(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t t = 0; t < n; ++t) col[t] = seq.frames[t][j];
        const double med = median_of(col);
        std::vector<double> dev(n);
        for (std::size_t t = 0; t < n; ++t) dev[t] = std::abs(col[t] - med);
        // Modified z-score; with MAD = 0 fall back to the mean absolute deviation.
        double scale = median_of(dev) / 0.6745;
        if (scale == 0.0) {
            double mean_ad = 0.0;
            for (double v : dev) mean_ad += v;
            scale = 1.253314 * mean_ad / static_cast<double>(n);
        }
        std::size_t n_in = 0;
        for (std::size_t t = 0; t < n; ++t) {
            inlier[t] = scale == 0.0 || dev[t] / scale <= z_threshold;
            n_in += inlier[t];
        }
        if (n_in == 0) {
            throw UnrecoverableChannel("coordinate " + std::to_string(j) + " has no inlier frames");
        }
        if (n_in == n) continue;

        std::ptrdiff_t prev = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (inlier[t]) {
                prev = static_cast<std::ptrdiff_t>(t);
                continue;
            }
            std::size_t next = t + 1;
            while (next < n && !inlier[next]) ++next;
            double v;
            if (prev < 0) {
                v = col[next];
            } else if (next >= n) {
                v = col[static_cast<std::size_t>(prev)];
            } else {
                const auto p = static_cast<std::size_t>(prev);
                const double frac = static_cast<double>(t - p) / static_cast<double>(next - p);
                v = col[p] + frac * (col[next] - col[p]);
            }
            out.frames[t][j] = v;
        }
    }
    return out;
}

PoseSequence resample_linear(const PoseSequence& seq, double target_hz) {
    if (!(target_hz > 0.0)) throw InvalidArgument("target rate must be positive");
    if (!(seq.rate_hz > 0.0)) throw InvalidArgument("source rate must be positive");
    if (seq.size() < 2) throw InvalidArgument("resample_linear needs at least 2 frames");
    check_uniform_dim(seq);

    const std::size_t n = seq.size();
    const std::size_t d = seq.dim();
    const double span = seq.duration() * target_hz;
    const auto count = static_cast<std::size_t>(std::ceil(span - 1e-9)) + 1;

    PoseSequence out;
    out.rate_hz = target_hz;
    out.person = seq.person;
    out.frames.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double pos = static_cast<double>(k) / target_hz * seq.rate_hz;
        auto i = static_cast<std::size_t>(std::floor(pos));
        if (i > n - 2) i = n - 2;
        const double frac = pos - static_cast<double>(i);
        PoseVector f(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double a = seq.frames[i][j];
            const double b = seq.frames[i + 1][j];
            f[j] = a + frac * (b - a);
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

PoseSequence lowpass(const PoseSequence& seq, double cutoff_hz) {
    if (!(cutoff_hz > 0.0)) throw InvalidArgument("cutoff must be positive");
    if (!(cutoff_hz < seq.rate_hz / 2.0)) {
        throw InvalidArgument("cutoff at or above the Nyquist frequency");
    }
    check_uniform_dim(seq);
    const double k = std::tan(std::numbers::pi * cutoff_hz / seq.rate_hz);
    PoseSequence out = seq;
    const std::size_t n = seq.size();
    std::vector<double> col(n);
    for (std::size_t j = 0; j < seq.dim(); ++j) {
        for (std::size_t t = 0; t < n; ++t) col[t] = seq.frames[t][j];
        const auto y = filtfilt(col, k);
        for (std::size_t t = 0; t < n; ++t) out.frames[t][j] = y[t];
    }
    return out;
}

PoseSequence preprocess(const PoseSequence& seq, const PreprocessConfig& cfg) {
    PoseSequence s = seq.size() >= 3 ? remove_outliers(seq, cfg.outlier_z) : seq;
    if (s.rate_hz != cfg.resample_hz) s = resample_linear(s, cfg.resample_hz);
    if (cfg.cutoff_hz > 0.0 && cfg.cutoff_hz < s.rate_hz / 2.0) s = lowpass(s, cfg.cutoff_hz);
    return s;
}

Recording preprocess(const Recording& rec, const PreprocessConfig& cfg) {
    Recording out{preprocess(rec.agent, cfg), preprocess(rec.partner, cfg)};
    const std::size_t n = std::min(out.agent.size(), out.partner.size());
    out.agent.frames.resize(n);
    out.partner.frames.resize(n);
    return out;
}

double ScaleParams::apply(std::size_t feature, double v) const {
    if (degenerate[feature]) return 0.5;
    return (v - min[feature]) / (max[feature] - min[feature]);
}

double ScaleParams::invert(std::size_t feature, double v) const {
    if (degenerate[feature]) return min[feature];
    return min[feature] + v * (max[feature] - min[feature]);
}

namespace {

template <typename F>
InteractionWindow map_features(const InteractionWindow& w, std::size_t features, F&& f) {
    const std::size_t d = w.dim();
    if (2 * d != features) {
        throw InvalidArgument("window has " + std::to_string(2 * d) + " features, scale expects " +
                              std::to_string(features));
    }
    InteractionWindow out = w;
    for (std::size_t t = 0; t < w.length(); ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            out.agent[t][j] = f(j, w.agent[t][j]);
            out.partner[t][j] = f(d + j, w.partner[t][j]);
        }
    }
    return out;
}

}  // namespace

InteractionWindow ScaleParams::apply(const InteractionWindow& w) const {
    return map_features(w, features(), [this](std::size_t k, double v) { return apply(k, v); });
}

InteractionWindow ScaleParams::invert(const InteractionWindow& w) const {
    return map_features(w, features(), [this](std::size_t k, double v) { return invert(k, v); });
}

Normalized normalize01(const std::vector<InteractionWindow>& windows) {
    if (windows.empty()) throw InvalidArgument("normalize01 needs at least one window");
    const std::size_t d = windows.front().dim();
    const std::size_t len = windows.front().length();
    ScaleParams p;
    p.min.assign(2 * d, std::numeric_limits<double>::infinity());
    p.max.assign(2 * d, -std::numeric_limits<double>::infinity());
    for (const auto& w : windows) {
        if (w.dim() != d || w.length() != len || w.partner.size() != len) {
            throw InvalidArgument("normalize01 windows differ in shape");
        }
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                p.min[j] = std::min(p.min[j], w.agent[t][j]);
                p.max[j] = std::max(p.max[j], w.agent[t][j]);
                p.min[d + j] = std::min(p.min[d + j], w.partner[t][j]);
                p.max[d + j] = std::max(p.max[d + j], w.partner[t][j]);
            }
        }
    }
    p.degenerate.resize(2 * d);
    for (std::size_t k = 0; k < 2 * d; ++k) p.degenerate[k] = !(p.max[k] > p.min[k]);

    Normalized out;
    out.windows.reserve(windows.size());
    for (const auto& w : windows) out.windows.push_back(p.apply(w));
    out.params = std::move(p);
    return out;
}

InteractionWindow augment(const InteractionWindow& window, std::size_t temporal_jitter_frames,
                          double spatial_noise_sigma, std::uint64_t rng_seed) {
    const std::size_t len = window.length();
    if (2 * temporal_jitter_frames >= len && temporal_jitter_frames > 0) {
        throw InvalidArgument("temporal jitter must be below half the window length");
    }
    if (spatial_noise_sigma < 0.0) throw InvalidArgument("noise sigma must be nonnegative");

    Rng rng = make_rng(rng_seed);
    const auto jitter = static_cast<std::ptrdiff_t>(temporal_jitter_frames);
    std::ptrdiff_t shift = 0;
    if (jitter > 0) shift = std::uniform_int_distribution<std::ptrdiff_t>(-jitter, jitter)(rng);

    InteractionWindow out = window;
    const auto last = static_cast<std::ptrdiff_t>(len) - 1;
    for (std::size_t t = 0; t < len; ++t) {
        const auto src = static_cast<std::size_t>(
            std::clamp(static_cast<std::ptrdiff_t>(t) + shift, std::ptrdiff_t{0}, last));
        out.agent[t] = window.agent[src];
        out.partner[t] = window.partner[src];
    }
    if (spatial_noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spatial_noise_sigma);
        for (auto* part : {&out.agent, &out.partner}) {
            for (auto& f : *part) {
                for (double& v : f) v += noise(rng);
            }
        }
    }
    return out;
}

std::vector<InteractionWindow> make_windows(const Recording& rec, std::size_t length,
                                            std::size_t stride, std::size_t recording_index) {
    if (length == 0 || stride == 0) throw InvalidArgument("window length and stride must be positive");
    std::vector<InteractionWindow> out;
    const std::size_t n = rec.size();
    for (std::size_t start = 0; start + length <= n; start += stride) {
        InteractionWindow w;
        w.agent.assign(rec.agent.frames.begin() + static_cast<std::ptrdiff_t>(start),
                       rec.agent.frames.begin() + static_cast<std::ptrdiff_t>(start + length));
        w.partner.assign(rec.partner.frames.begin() + static_cast<std::ptrdiff_t>(start),
                         rec.partner.frames.begin() + static_cast<std::ptrdiff_t>(start + length));
        w.label = 1;
        w.origin = WindowOrigin{recording_index, start};
        out.push_back(std::move(w));
    }
    return out;
}

InteractionWindow shift_agent(const Recording& rec, const InteractionWindow& window,
                              std::ptrdiff_t offset) {
    if (!window.origin) throw InvalidArgument("window carries no origin to shift from");
    const auto start = static_cast<std::ptrdiff_t>(window.origin->start) + offset;
    const auto len = static_cast<std::ptrdiff_t>(window.length());
    if (start < 0 || start + len > static_cast<std::ptrdiff_t>(rec.agent.size())) {
        throw InvalidArgument("shifted segment leaves the recording");
    }
    InteractionWindow out = window;
    out.agent.assign(rec.agent.frames.begin() + start, rec.agent.frames.begin() + start + len);
    out.label = 0;
    return out;
}

NegativeSamples negative_sample(const std::vector<Recording>& recordings,
                                const std::vector<InteractionWindow>& real_windows,
                                std::size_t shift_min, std::uint64_t rng_seed) {
    NegativeSamples out;
    if (real_windows.empty()) return out;
    if (shift_min == 0 || shift_min < real_windows.front().length()) {
        throw InvalidArgument("shift_min must be at least the window length");
    }
    Rng rng = make_rng(rng_seed);
    for (const auto& w : real_windows) {
        if (!w.origin || w.origin->recording >= recordings.size()) {
            throw InvalidArgument("real window has no valid origin");
        }
        const Recording& rec = recordings[w.origin->recording];
        const auto len = static_cast<std::ptrdiff_t>(w.length());
        const auto start = static_cast<std::ptrdiff_t>(w.origin->start);
        const auto last_start = static_cast<std::ptrdiff_t>(rec.agent.size()) - len;
        const auto gap = static_cast<std::ptrdiff_t>(shift_min);
        // Admissible starts: [0, start - gap] and [start + gap, last_start].
        const std::ptrdiff_t left = std::max<std::ptrdiff_t>(0, start - gap + 1);
        const std::ptrdiff_t right = std::max<std::ptrdiff_t>(0, last_start - (start + gap) + 1);
        if (left + right == 0) {
            ++out.skipped;
            continue;
        }
        std::ptrdiff_t pick = std::uniform_int_distribution<std::ptrdiff_t>(0, left + right - 1)(rng);
        const std::ptrdiff_t new_start = pick < left ? pick : start + gap + (pick - left);
        out.windows.push_back(shift_agent(rec, w, new_start - start));
    }
    return out;
}

namespace {

// Gesture bursts separated by idle spells. Each burst has a Tukey envelope,
// a shared frequency and per-coordinate amplitude and phase.
struct Burst {
    std::size_t start = 0;
    std::size_t length = 0;
    double freq_hz = 1.0;
    std::vector<double> amp;
    std::vector<double> phase;
    // Independent oscillation used for the part of a reply not copied from the partner.
    double reply_freq_hz = 1.0;
    std::vector<double> reply_phase;
};

std::vector<Burst> draw_bursts(std::size_t n, std::size_t d, const SyntheticConfig& cfg, Rng& rng) {
    std::uniform_int_distribution<std::size_t> idle_len(cfg.idle_min, cfg.idle_max);
    std::uniform_int_distribution<std::size_t> burst_len(cfg.burst_min, cfg.burst_max);
    std::uniform_real_distribution<double> freq(0.6, 1.5);
    std::uniform_real_distribution<double> amp(0.3, 0.6);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<Burst> bursts;
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, 24)(rng);
    while (t < n) {
        Burst b;
        b.start = t;
        b.length = burst_len(rng);
        b.freq_hz = freq(rng);
        b.reply_freq_hz = freq(rng);
        b.amp.resize(d);
        b.phase.resize(d);
        b.reply_phase.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            b.amp[j] = amp(rng);
            b.phase[j] = phase(rng);
            b.reply_phase[j] = phase(rng);
        }
        t += b.length + idle_len(rng);
        bursts.push_back(std::move(b));
    }
    return bursts;
}

double tukey(std::size_t k, std::size_t len) {
    constexpr double ramp = 4.0;
    const double x = static_cast<double>(k);
    const double r = std::min(x + 1.0, static_cast<double>(len) - x);
    if (r >= ramp) return 1.0;
    return 0.5 - 0.5 * std::cos(std::numbers::pi * r / ramp);
}

void ar_noise(std::vector<PoseVector>& frames, double scale, Rng& rng) {
    std::normal_distribution<double> innov(0.0, scale);
    const std::size_t d = frames.front().size();
    std::vector<double> state(d, 0.0);
    for (auto& f : frames) {
        for (std::size_t j = 0; j < d; ++j) {
            state[j] = 0.8 * state[j] + innov(rng);
            f[j] += state[j];
        }
    }
}

}  // namespace

Recording gen_synthetic_interaction(std::size_t n_frames, double coupling, std::uint64_t rng_seed,
                                    const SyntheticConfig& cfg) {
    if (n_frames < 2 * cfg.window) throw InvalidArgument("synthetic interaction needs at least 2L frames");
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw InvalidArgument("coupling must lie in [0, 1]");
    if (cfg.dim == 0) throw InvalidArgument("pose dimension must be positive");
    if (cfg.burst_min == 0 || cfg.burst_min > cfg.burst_max || cfg.idle_min > cfg.idle_max) {
        throw InvalidArgument("burst and idle length ranges must be ordered and gestures non-empty");
    }

    const std::size_t n = n_frames;
    const std::size_t d = cfg.dim;
    const double two_pi = 2.0 * std::numbers::pi;
    const double rho = cfg.shape_following;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    Rng partner_rng = make_rng(rng_seed, 1);
    Rng own_rng = make_rng(rng_seed, 2);
    Rng partner_noise = make_rng(rng_seed, 3);
    Rng agent_noise = make_rng(rng_seed, 4);

    const auto partner_bursts = draw_bursts(n, d, cfg, partner_rng);
    const auto own_bursts = draw_bursts(n, d, cfg, own_rng);

    Recording rec;
    rec.partner.person = Person::partner_side;
    rec.agent.person = Person::agent_side;
    rec.partner.rate_hz = rec.agent.rate_hz = cfg.rate_hz;
    rec.partner.frames.assign(n, PoseVector(d, 0.0));
    rec.agent.frames.assign(n, PoseVector(d, 0.0));

    for (const auto& b : partner_bursts) {
        for (std::size_t k = 0; k < b.length; ++k) {
            const double env = tukey(k, b.length);
            const double ts = static_cast<double>(k) / cfg.rate_hz;
            const std::size_t tp = b.start + k;
            const std::size_t ta = tp + cfg.response_lag;
            for (std::size_t j = 0; j < d; ++j) {
                const double own = std::sin(two_pi * b.freq_hz * ts + b.phase[j]);
                if (tp < n) rec.partner.frames[tp][j] += env * b.amp[j] * (cfg.gesture_offset + own);
                if (ta < n && coupling > 0.0) {
                    const double other = std::sin(two_pi * b.reply_freq_hz * ts + b.reply_phase[j]);
                    const double reply = cfg.gesture_offset + rho * own + rho_c * other;
                    rec.agent.frames[ta][j] += coupling * env * b.amp[j] * reply;
                }
            }
        }
    }
    if (coupling < 1.0) {
        for (const auto& b : own_bursts) {
            for (std::size_t k = 0; k < b.length && b.start + k < n; ++k) {
                const double env = tukey(k, b.length);
                const double ts = static_cast<double>(k) / cfg.rate_hz;
                for (std::size_t j = 0; j < d; ++j) {
                    const double own = std::sin(two_pi * b.freq_hz * ts + b.phase[j]);
                    rec.agent.frames[b.start + k][j] +=
                        (1.0 - coupling) * env * b.amp[j] * (cfg.gesture_offset + own);
                }
            }
        }
    }
    ar_noise(rec.partner.frames, cfg.idle_noise, partner_noise);
    ar_noise(rec.agent.frames, cfg.idle_noise, agent_noise);
    return rec;
}

}  // namespace fep::signal
