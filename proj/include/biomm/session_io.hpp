#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "biomm/signal.hpp"

namespace biomm {

namespace fs = std::filesystem;

// On-disk session layout:
//
//   <root>/labels.jsonl                  one object per session
//   <root>/<session>/<session>_ECG.csv   header `time_s,value`
//   <root>/<session>/<session>_EDA.csv
//   <root>/<session>/frames/frames.csv   header `frame_index,timestamp_s`
//   <root>/<session>/frames/<i>.pgm      8-bit grayscale (P5)
//   <root>/<session>/frames/landmarks.csv  optional, `frame_index,x0,y0,x1,y1,...`
//   <root>/<session>/frames/features.csv   optional, replaces the PGMs

struct LabelRecord {
  std::string subject;
  std::string session;
  AffectLabel label;
};

/// Sample rates accepted on ingest; the rate of a CSV is inferred from its
/// time column and snapped to one of these.
inline constexpr std::array<double, 2> kSupportedRatesHz = {128.0, 800.0};

std::string format_double(double v);

void write_signal_csv(const fs::path& path, const SignalTrace& trace);
SignalTrace read_signal_csv(const fs::path& path, Channel channel);

void write_pgm(const fs::path& path, const Image& image);
Image read_pgm(const fs::path& path);

void write_labels(const fs::path& path, const std::vector<LabelRecord>& records);
std::vector<LabelRecord> read_labels(const fs::path& path);

void write_session(const fs::path& dir, const SessionData& session);
/// Loads one session directory; the session id is the directory name.
SessionData load_session(const fs::path& dir);
/// Loads every session listed in `<root>/labels.jsonl`, ordered by session id.
std::vector<SessionData> load_corpus(const fs::path& root);

// Processed sample file, little-endian:
//   magic "BIOMMSMP" | u32 version | u32 segment_length | u32 channels | u64 count
//   count x {
//     u32 len, subject | u32 len, session | i64 frame_index | f64 timestamp_s
//     u8 labeled | f64 valence, arousal, liking, emotions[7]
//     f64 window[segment_length] per channel (ECG, EDA)
//     u8 face_kind (0 image, 1 features) | u32 height | u32 width | f64 face[height * width]
//   }
inline constexpr std::uint32_t kSampleFileVersion = 1;

void write_samples(const fs::path& path, const std::vector<SyncedSample>& samples);
std::vector<SyncedSample> read_samples(const fs::path& path);

}  // namespace biomm
