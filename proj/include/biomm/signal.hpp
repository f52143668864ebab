#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace biomm {

inline constexpr std::size_t kSegmentLength = 1000;
inline constexpr double kModelRateHz = 128.0;
inline constexpr std::size_t kEmotionCount = 7;
inline constexpr std::size_t kTargetCount = 10;

enum class Channel { ECG = 0, EDA = 1 };
inline constexpr std::array<Channel, 2> kChannels = {Channel::ECG, Channel::EDA};

std::string_view channel_name(Channel c);
Channel parse_channel(std::string_view name);

struct SignalTrace {
  Channel channel = Channel::ECG;
  double sample_rate_hz = kModelRateHz;
  double start_time_s = 0.0;
  std::vector<double> samples;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  double time_at(std::size_t i) const { return start_time_s + static_cast<double>(i) / sample_rate_hz; }
};

/// Grayscale intensities on [0, 1], row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double mean() const;
  friend bool operator==(const Image&, const Image&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Either a face image or a precomputed feature vector.
using FacePayload = std::variant<Image, std::vector<double>>;

struct FrameRecord {
  std::int64_t frame_index = 0;
  double timestamp_s = 0.0;
  FacePayload payload;
  std::vector<Point> landmarks;
};

inline constexpr std::array<std::string_view, kEmotionCount> kEmotionNames = {
    "neutral", "disgust", "joy", "surprise", "anger", "fear", "sadness"};

struct AffectLabel {
  double valence = 5.0;
  double arousal = 5.0;
  double liking = 5.0;
  std::array<double, kEmotionCount> emotions{};

  /// Throws ValidationError unless affect dims are on [1, 9] and emotions on [0, 1].
  void validate() const;
  /// Ten regression targets on [0, 1]: (v - 1) / 8 for the affect dims,
  /// emotions unchanged.
  std::array<double, kTargetCount> scaled_targets() const;
  std::size_t emotion_class() const;
};

AffectLabel one_hot_label(double valence, double arousal, double liking, std::size_t emotion);

struct BioSegment {
  Channel channel = Channel::ECG;
  std::int64_t frame_index = 0;
  std::vector<double> window;
};

struct SyncedSample {
  std::string subject_id;
  std::string session_id;
  std::int64_t frame_index = 0;
  double timestamp_s = 0.0;
  std::array<BioSegment, 2> segments;  // ECG, EDA
  FacePayload face;
  AffectLabel label;
  bool labeled = true;

  const BioSegment& segment(Channel c) const { return segments[static_cast<std::size_t>(c)]; }
};

/// Everything loaded for one recording session, before preprocessing.
struct SessionData {
  std::string subject_id;
  std::string session_id;
  std::vector<SignalTrace> traces;
  std::vector<FrameRecord> frames;
  std::optional<AffectLabel> label;
};

/// Linear interpolation onto a uniform grid at `target_hz`; the output holds
/// round(n * target / source) samples and starts at the same time.
SignalTrace resample(const SignalTrace& trace, double target_hz);

struct Rescaled {
  SignalTrace trace;
  bool constant = false;  // input had zero range; every value set to 0.5
};

/// Min-max scaling of the whole trace onto [0, 1].
Rescaled rescale(const SignalTrace& trace);

enum class WindowAlignment { Centered, Trailing, Leading };

std::string_view alignment_name(WindowAlignment a);
WindowAlignment parse_alignment(std::string_view name);

struct SegmentOptions {
  std::size_t length = kSegmentLength;
  WindowAlignment alignment = WindowAlignment::Centered;
};

/// Index of the sample nearest to time `t`, clamped to the trace.
std::size_t nearest_sample(const SignalTrace& trace, double t);

/// Cuts one fixed-length window per frame time. Samples outside the trace
/// replicate the first/last sample. Frame indices are positions in
/// `frame_times`.
std::vector<BioSegment> segment_for_frames(const SignalTrace& trace, std::span<const double> frame_times,
                                           const SegmentOptions& options = {});

struct CropOptions {
  std::size_t size = 64;
  double margin = 0.2;  // fraction added to the box width and height, split evenly
};

/// Pixel-space box [x0, x1) x [y0, y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

Box landmark_box(const Image& image, std::span<const Point> landmarks, const CropOptions& options = {});
/// Bilinear resampling of `box` to size x size with edge clamping.
Image resize_box(const Image& image, const Box& box, std::size_t size);
Image crop_face(const Image& image, std::span<const Point> landmarks, const CropOptions& options = {});

struct PipelineOptions {
  double model_rate_hz = kModelRateHz;
  SegmentOptions segment;
  CropOptions crop;
};

struct SyncResult {
  std::vector<SyncedSample> samples;
  std::vector<std::string> warnings;
};

/// Resamples, rescales and segments both bio channels around every frame
/// and pairs the windows with the frame's face payload and the session label.
SyncResult synchronize(const SessionData& session, const PipelineOptions& options = {});

}  // namespace biomm
