#include "biomm/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biomm/error.hpp"

namespace biomm {

std::string_view channel_name(Channel c) { return c == Channel::ECG ? "ECG" : "EDA"; }

Channel parse_channel(std::string_view name) {
  if (name == "ECG") return Channel::ECG;
  if (name == "EDA") return Channel::EDA;
  throw IngestError("unknown channel '" + std::string(name) + "'");
}

double Image::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

void AffectLabel::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 1.0 && v <= 9.0))
      throw ValidationError(std::string(name) + " " + std::to_string(v) + " outside [1, 9]");
  };
  check(valence, "valence");
  check(arousal, "arousal");
  check(liking, "liking");
  for (std::size_t i = 0; i < kEmotionCount; ++i)
    if (!(emotions[i] >= 0.0 && emotions[i] <= 1.0))
      throw ValidationError("emotion '" + std::string(kEmotionNames[i]) + "' " + std::to_string(emotions[i]) +
                            " outside [0, 1]");
}

std::array<double, kTargetCount> AffectLabel::scaled_targets() const {
  std::array<double, kTargetCount> t{};
  t[0] = (valence - 1.0) / 8.0;
  t[1] = (arousal - 1.0) / 8.0;
  t[2] = (liking - 1.0) / 8.0;
  std::copy(emotions.begin(), emotions.end(), t.begin() + 3);
  return t;
}

std::size_t AffectLabel::emotion_class() const {
  return static_cast<std::size_t>(std::max_element(emotions.begin(), emotions.end()) - emotions.begin());
}

AffectLabel one_hot_label(double valence, double arousal, double liking, std::size_t emotion) {
  AffectLabel l{valence, arousal, liking, {}};
  l.emotions.at(emotion) = 1.0;
  return l;
}

SignalTrace resample(const SignalTrace& trace, double target_hz) {
  if (!(target_hz > 0.0)) throw ValidationError("resample: target rate must be positive");
  if (trace.samples.empty()) throw IngestError("resample: empty " + std::string(channel_name(trace.channel)) + " trace");
  const std::size_t n = trace.samples.size();
  const auto out_n = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(n) * target_hz / trace.sample_rate_hz)));
  SignalTrace out{trace.channel, target_hz, trace.start_time_s, std::vector<double>(out_n)};
  const double ratio = trace.sample_rate_hz / target_hz;
  for (std::size_t j = 0; j < out_n; ++j) {
    const double pos = static_cast<double>(j) * ratio;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= n) {
      out.samples[j] = trace.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    const double a = trace.samples[i], b = trace.samples[i + 1];
    out.samples[j] = frac == 0.0 ? a : a + frac * (b - a);
  }
  return out;
}

Rescaled rescale(const SignalTrace& trace) {
  if (trace.samples.empty()) throw IngestError("rescale: empty trace");
  const auto [lo, hi] = std::minmax_element(trace.samples.begin(), trace.samples.end());
  Rescaled r{trace, false};
  const double min = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(r.trace.samples.begin(), r.trace.samples.end(), 0.5);
    r.constant = true;
    return r;
  }
  for (double& v : r.trace.samples) v = std::clamp((v - min) / range, 0.0, 1.0);
  return r;
}

std::string_view alignment_name(WindowAlignment a) {
  switch (a) {
    case WindowAlignment::Centered: return "centered";
    case WindowAlignment::Trailing: return "trailing";
    case WindowAlignment::Leading: return "leading";
  }
  return "centered";
}

WindowAlignment parse_alignment(std::string_view name) {
  if (name == "centered") return WindowAlignment::Centered;
  if (name == "trailing") return WindowAlignment::Trailing;
  if (name == "leading") return WindowAlignment::Leading;
  throw ConfigError("unknown window alignment '" + std::string(name) + "'");
}

std::size_t nearest_sample(const SignalTrace& trace, double t) {
  const double pos = std::round((t - trace.start_time_s) * trace.sample_rate_hz);
  if (pos <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(pos), trace.samples.size() - 1);
}

std::vector<BioSegment> segment_for_frames(const SignalTrace& trace, std::span<const double> frame_times,
                                           const SegmentOptions& options) {
  if (trace.samples.empty()) throw IngestError("segment_for_frames: empty trace");
  if (options.length == 0) throw ConfigError("segment length must be positive");
  const auto n = static_cast<long long>(trace.samples.size());
  const auto len = static_cast<long long>(options.length);
  std::vector<BioSegment> out;
  out.reserve(frame_times.size());
  for (std::size_t f = 0; f < frame_times.size(); ++f) {
    const auto center = static_cast<long long>(nearest_sample(trace, frame_times[f]));
    long long first = center - len / 2;
    if (options.alignment == WindowAlignment::Trailing) first = center - len + 1;
    if (options.alignment == WindowAlignment::Leading) first = center;
    BioSegment seg{trace.channel, static_cast<std::int64_t>(f), std::vector<double>(options.length)};
    for (long long i = 0; i < len; ++i)
      seg.window[static_cast<std::size_t>(i)] = trace.samples[static_cast<std::size_t>(std::clamp(first + i, 0LL, n - 1))];
    out.push_back(std::move(seg));
  }
  return out;
}

Box landmark_box(const Image& image, std::span<const Point> landmarks, const CropOptions& options) {
  if (landmarks.size() < 2) throw IngestError("crop_face: need at least 2 landmarks");
  double x0 = landmarks[0].x, x1 = x0, y0 = landmarks[0].y, y1 = y0;
  for (const Point& p : landmarks) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (!(x1 > x0) || !(y1 > y0)) throw IngestError("crop_face: landmarks span a zero-area box");
  const double mx = (x1 - x0) * options.margin / 2.0, my = (y1 - y0) * options.margin / 2.0;
  Box b{x0 - mx, y0 - my, x1 + mx, y1 + my};
  b.x0 = std::max(b.x0, 0.0);
  b.y0 = std::max(b.y0, 0.0);
  b.x1 = std::min(b.x1, static_cast<double>(image.width));
  b.y1 = std::min(b.y1, static_cast<double>(image.height));
  if (!(b.x1 > b.x0) || !(b.y1 > b.y0)) throw IngestError("crop_face: landmark box lies outside the image");
  return b;
}

Image resize_box(const Image& image, const Box& box, std::size_t size) {
  if (image.pixels.empty()) throw IngestError("crop_face: empty image");
  Image out(size, size);
  const double sx = (box.x1 - box.x0) / static_cast<double>(size);
  const double sy = (box.y1 - box.y0) / static_cast<double>(size);
  const auto max_x = static_cast<double>(image.width - 1), max_y = static_cast<double>(image.height - 1);
  for (std::size_t r = 0; r < size; ++r) {
    const double y = std::clamp(box.y0 + (static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < size; ++c) {
      const double x = std::clamp(box.x0 + (static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = image.at(y0, x0) + fx * (image.at(y0, x1) - image.at(y0, x0));
      const double bottom = image.at(y1, x0) + fx * (image.at(y1, x1) - image.at(y1, x0));
      out.at(r, c) = top + fy * (bottom - top);
    }
  }
  return out;
}

Image crop_face(const Image& image, std::span<const Point> landmarks, const CropOptions& options) {
  return resize_box(image, landmark_box(image, landmarks, options), options.size);
}

SyncResult synchronize(const SessionData& session, const PipelineOptions& options) {
  std::array<const SignalTrace*, 2> by_channel{};
  for (const SignalTrace& t : session.traces) by_channel[static_cast<std::size_t>(t.channel)] = &t;
  std::string missing;
  for (Channel c : kChannels)
    if (!by_channel[static_cast<std::size_t>(c)]) missing += (missing.empty() ? "" : ", ") + std::string(channel_name(c));
  if (!missing.empty()) throw IngestError("session '" + session.session_id + "' is missing channel(s): " + missing);
  if (session.frames.empty()) throw IngestError("session '" + session.session_id + "' has no frames");
  for (std::size_t i = 1; i < session.frames.size(); ++i)
    if (!(session.frames[i].timestamp_s > session.frames[i - 1].timestamp_s))
      throw IngestError("session '" + session.session_id + "': frame timestamps must be strictly increasing");

  SyncResult result;
  std::vector<double> times;
  times.reserve(session.frames.size());
  for (const FrameRecord& f : session.frames) times.push_back(f.timestamp_s);

  std::array<std::vector<BioSegment>, 2> segments;
  for (Channel c : kChannels) {
    const SignalTrace& raw = *by_channel[static_cast<std::size_t>(c)];
    if (raw.samples.empty())
      throw IngestError("session '" + session.session_id + "': empty " + std::string(channel_name(c)) + " trace");
    SignalTrace at_rate = raw.sample_rate_hz == options.model_rate_hz ? raw : resample(raw, options.model_rate_hz);
    Rescaled scaled = rescale(at_rate);
    if (scaled.constant)
      result.warnings.push_back("session '" + session.session_id + "': constant " + std::string(channel_name(c)) +
                                " trace scaled to 0.5");
    segments[static_cast<std::size_t>(c)] = segment_for_frames(scaled.trace, times, options.segment);
  }

  result.samples.reserve(session.frames.size());
  for (std::size_t i = 0; i < session.frames.size(); ++i) {
    const FrameRecord& f = session.frames[i];
    SyncedSample s;
    s.subject_id = session.subject_id;
    s.session_id = session.session_id;
    s.frame_index = f.frame_index;
    s.timestamp_s = f.timestamp_s;
    for (Channel c : kChannels) {
      BioSegment seg = std::move(segments[static_cast<std::size_t>(c)][i]);
      seg.frame_index = f.frame_index;
      s.segments[static_cast<std::size_t>(c)] = std::move(seg);
    }
    if (const auto* img = std::get_if<Image>(&f.payload)) {
      const std::size_t size = options.crop.size;
      if (!f.landmarks.empty()) {
        s.face = crop_face(*img, f.landmarks, options.crop);
      } else if (img->height == size && img->width == size) {
        s.face = *img;
      } else {
        Box full{0, 0, static_cast<double>(img->width), static_cast<double>(img->height)};
        s.face = resize_box(*img, full, size);
      }
    } else {
      s.face = f.payload;
    }
    s.labeled = session.label.has_value();
    if (session.label) s.label = *session.label;
    result.samples.push_back(std::move(s));
  }
  return result;
}

}  // namespace biomm
