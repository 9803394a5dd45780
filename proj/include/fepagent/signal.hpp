#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fepagent/types.hpp"

// Pose time-series ingestion helpers: cleaning, resampling, smoothing,
// scaling, augmentation, negative sampling and a synthetic interaction
// generator standing in for recorded conversations.
//
// Keypoint files and joint-angle files are both reduced to PoseSequence;
// nothing downstream distinguishes the two.
namespace fep::signal {

inline constexpr double kDefaultOutlierZ = 3.5;
inline constexpr double kDefaultRateHz = 8.0;
inline constexpr double kDefaultCutoffHz = 4.0;
inline constexpr std::size_t kDefaultWindow = 24;  // 3 s at 8 fps

// Frames whose modified z-score 0.6745 (x - median) / MAD exceeds z_threshold
// on a coordinate are replaced on that coordinate by linear interpolation
// between the nearest inliers. Requires >= 3 frames.
PoseSequence remove_outliers(const PoseSequence& seq, double z_threshold = kDefaultOutlierZ);

// Output frame k sits at t = k / target_hz; there are ceil(duration * target_hz) + 1
// of them. The last output frame may fall up to one output period past the
// final input frame; it is extrapolated from the last input segment so that
// affine signals stay exact.
PoseSequence resample_linear(const PoseSequence& seq, double target_hz);

// Zero-phase order-4 Butterworth low-pass (two biquads, run forward then
// backward with odd-reflection padding and steady-state initial conditions).
PoseSequence lowpass(const PoseSequence& seq, double cutoff_hz);

struct PreprocessConfig {
    double outlier_z = kDefaultOutlierZ;
    double resample_hz = kDefaultRateHz;
    double cutoff_hz = kDefaultCutoffHz;
};

// outlier removal -> resample -> low-pass. The low-pass is skipped when the
// cutoff is at or above the Nyquist rate of the resampled stream.
PoseSequence preprocess(const PoseSequence& seq, const PreprocessConfig& cfg);
Recording preprocess(const Recording& rec, const PreprocessConfig& cfg);

// Per-feature min-max scaling. Features are the 2d coordinates of a window
// frame: agent coordinates first, then partner coordinates.
struct ScaleParams {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<bool> degenerate;  // zero range: mapped to 0.5

    std::size_t features() const { return min.size(); }
    double apply(std::size_t feature, double v) const;
    double invert(std::size_t feature, double v) const;
    InteractionWindow apply(const InteractionWindow& w) const;
    InteractionWindow invert(const InteractionWindow& w) const;
};

struct Normalized {
    std::vector<InteractionWindow> windows;
    ScaleParams params;
};

Normalized normalize01(const std::vector<InteractionWindow>& windows);

// Shifts the whole window in time by a uniform integer in [-jitter, +jitter]
// (edge frames repeat) and adds N(0, sigma^2) to every coordinate.
InteractionWindow augment(const InteractionWindow& window, std::size_t temporal_jitter_frames,
                          double spatial_noise_sigma, std::uint64_t rng_seed);

// Real windows of length L every `stride` frames, label 1, origin filled in.
std::vector<InteractionWindow> make_windows(const Recording& rec, std::size_t length,
                                            std::size_t stride, std::size_t recording_index = 0);

// Copy of `window` whose agent segment is taken from `start + offset` in the
// same recording. Throws InvalidArgument when the shifted segment leaves the recording.
InteractionWindow shift_agent(const Recording& rec, const InteractionWindow& window,
                              std::ptrdiff_t offset);

struct NegativeSamples {
    std::vector<InteractionWindow> windows;
    std::size_t skipped = 0;  // real windows with no admissible shift
};

// One label-0 window per real window: the agent segment is replaced by the
// agent's own motion from a start at least shift_min frames away, the
// partner segment is kept. shift_min must be >= L.
NegativeSamples negative_sample(const std::vector<Recording>& recordings,
                                const std::vector<InteractionWindow>& real_windows,
                                std::size_t shift_min, std::uint64_t rng_seed);

struct SyntheticConfig {
    std::size_t dim = 8;
    double rate_hz = kDefaultRateHz;
    std::size_t window = kDefaultWindow;
    std::size_t response_lag = 2;    // frames between a partner gesture and the agent's reply
    double shape_following = 0.7;    // fraction of the reply's oscillation copied from the partner
    double gesture_offset = 0.8;     // postural displacement while gesturing
    double idle_noise = 0.02;        // AR(1) innovation scale
    std::size_t burst_min = 16, burst_max = 48;  // gesture length in frames
    std::size_t idle_min = 12, idle_max = 40;    // pause length in frames
};

// Partner: alternating idle spells and gesture bursts. Agent: coupling times
// a lagged reply to each partner burst plus (1 - coupling) times its own
// independent bursts, plus its own idle noise. coupling = 0 gives independent
// streams.
Recording gen_synthetic_interaction(std::size_t n_frames, double coupling, std::uint64_t rng_seed,
                                    const SyntheticConfig& cfg = {});

}  // namespace fep::signal
