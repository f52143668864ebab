#include "biomm/session_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "biomm/error.hpp"

namespace biomm {

using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, const std::string& where, std::size_t line) {
  field = trim(field);
  T v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(where, line, "malformed number '" + std::string(field) + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw ParseError(where, line, "non-finite value");
  return v;
}

struct CsvFile {
  std::string where;
  std::vector<std::vector<std::string_view>> rows;
  std::vector<std::size_t> line_numbers;
  std::string text;
};

// Reads a CSV with a header whose first columns must equal `expected`.
// Returns data rows (header stripped).
void read_csv(const fs::path& path, std::span<const std::string_view> expected, CsvFile& out, bool prefix_only) {
  out.where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open " + out.where);
  std::ostringstream ss;
  ss << is.rdbuf();
  out.text = ss.str();
  std::string_view text = out.text;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (header) {
      header = false;
      const bool size_ok = prefix_only ? fields.size() >= expected.size() : fields.size() == expected.size();
      bool ok = size_ok;
      for (std::size_t i = 0; ok && i < expected.size(); ++i) ok = trim(fields[i]) == expected[i];
      if (!ok) throw ParseError(out.where, line_no, "unexpected header '" + std::string(line) + "'");
      continue;
    }
    out.rows.push_back(std::move(fields));
    out.line_numbers.push_back(line_no);
  }
  if (header) throw ParseError(out.where, 1, "missing header");
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& where) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IngestError(where + ": truncated sample file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& where) {
  const auto len = get<std::uint32_t>(is, where);
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw IngestError(where + ": truncated sample file");
  return s;
}

void put_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream& is, std::span<double> v, const std::string& where) {
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw IngestError(where + ": truncated sample file");
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

constexpr char kSampleMagic[8] = {'B', 'I', 'O', 'M', 'M', 'S', 'M', 'P'};

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_signal_csv(const fs::path& path, const SignalTrace& trace) {
  auto os = open_out(path);
  std::string out = "time_s,value\n";
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    out += format_double(trace.time_at(i));
    out += ',';
    out += format_double(trace.samples[i]);
    out += '\n';
  }
  os << out;
}

SignalTrace read_signal_csv(const fs::path& path, Channel channel) {
  static constexpr std::string_view header[] = {"time_s", "value"};
  CsvFile csv;
  read_csv(path, header, csv, false);
  if (csv.rows.size() < 2) throw IngestError(csv.where + ": need at least 2 samples to infer the sample rate");
  SignalTrace t;
  t.channel = channel;
  std::vector<double> times;
  times.reserve(csv.rows.size());
  t.samples.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != 2) throw ParseError(csv.where, csv.line_numbers[r], "expected 2 fields");
    times.push_back(parse_number<double>(row[0], csv.where, csv.line_numbers[r]));
    t.samples.push_back(parse_number<double>(row[1], csv.where, csv.line_numbers[r]));
    if (r > 0 && !(times[r] > times[r - 1]))
      throw ParseError(csv.where, csv.line_numbers[r], "time_s must be strictly increasing");
  }
  t.start_time_s = times.front();
  const double rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
  double snapped = 0.0;
  for (double supported : kSupportedRatesHz)
    if (std::abs(rate - supported) <= 1e-3 * supported) snapped = supported;
  if (snapped == 0.0)
    throw IngestError(csv.where + ": sample rate " + std::to_string(rate) + " Hz is not one of 128 or 800 Hz");
  t.sample_rate_hz = snapped;
  return t;
}

void write_pgm(const fs::path& path, const Image& image) {
  auto os = open_out(path, true);
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::string bytes(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0)));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_pgm(const fs::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open " + where);
  auto token = [&]() {
    std::string tok;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok += c;
    }
    return tok;
  };
  if (token() != "P5") throw IngestError(where + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw IngestError(where + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw IngestError(where + ": unsupported PGM geometry");
  std::string bytes(w * h, '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw IngestError(where + ": truncated PGM");
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / static_cast<double>(maxval);
  return img;
}

void write_labels(const fs::path& path, const std::vector<LabelRecord>& records) {
  auto os = open_out(path);
  for (const LabelRecord& r : records) {
    json j = {{"subject", r.subject},
              {"session", r.session},
              {"valence", r.label.valence},
              {"arousal", r.label.arousal},
              {"liking", r.label.liking},
              {"emotions", r.label.emotions}};
    os << j.dump() << '\n';
  }
}

std::vector<LabelRecord> read_labels(const fs::path& path) {
  const std::string where = path.string();
  std::ifstream is(path);
  if (!is) throw IngestError("cannot open " + where);
  std::vector<LabelRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    LabelRecord r;
    try {
      const json j = json::parse(line);
      r.subject = j.at("subject").get<std::string>();
      r.session = j.at("session").get<std::string>();
      r.label.valence = j.at("valence").get<double>();
      r.label.arousal = j.at("arousal").get<double>();
      r.label.liking = j.at("liking").get<double>();
      const auto& em = j.at("emotions");
      if (!em.is_array() || em.size() != kEmotionCount)
        throw ParseError(where, line_no, "emotions must be an array of 7 numbers");
      for (std::size_t i = 0; i < kEmotionCount; ++i) r.label.emotions[i] = em[i].get<double>();
    } catch (const json::exception& e) {
      throw ParseError(where, line_no, e.what());
    }
    try {
      r.label.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_session(const fs::path& dir, const SessionData& session) {
  fs::create_directories(dir / "frames");
  for (const SignalTrace& t : session.traces)
    write_signal_csv(dir / (session.session_id + "_" + std::string(channel_name(t.channel)) + ".csv"), t);

  std::string frames = "frame_index,timestamp_s\n";
  std::string landmarks;
  std::string features;
  bool any_landmarks = false;
  for (const FrameRecord& f : session.frames) {
    frames += std::to_string(f.frame_index) + "," + format_double(f.timestamp_s) + "\n";
    if (const auto* img = std::get_if<Image>(&f.payload)) {
      write_pgm(dir / "frames" / (std::to_string(f.frame_index) + ".pgm"), *img);
    } else {
      const auto& vec = std::get<std::vector<double>>(f.payload);
      if (features.empty()) {
        features = "frame_index";
        for (std::size_t i = 0; i < vec.size(); ++i) features += ",f" + std::to_string(i);
        features += "\n";
      }
      features += std::to_string(f.frame_index);
      for (double v : vec) features += "," + format_double(v);
      features += "\n";
    }
    if (!f.landmarks.empty()) {
      any_landmarks = true;
      landmarks += std::to_string(f.frame_index);
      for (const Point& p : f.landmarks) landmarks += "," + format_double(p.x) + "," + format_double(p.y);
      landmarks += "\n";
    }
  }
  open_out(dir / "frames" / "frames.csv") << frames;
  if (any_landmarks) open_out(dir / "frames" / "landmarks.csv") << "frame_index,x0,y0,...\n" << landmarks;
  if (!features.empty()) open_out(dir / "frames" / "features.csv") << features;
}

SessionData load_session(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestError("session directory " + dir.string() + " does not exist");
  SessionData s;
  s.session_id = dir.filename().string();
  if (s.session_id.empty()) s.session_id = dir.parent_path().filename().string();
  s.subject_id = s.session_id;
  for (Channel c : kChannels) {
    const fs::path p = dir / (s.session_id + "_" + std::string(channel_name(c)) + ".csv");
    if (fs::exists(p)) s.traces.push_back(read_signal_csv(p, c));
  }

  const fs::path frames_dir = dir / "frames";
  static constexpr std::string_view frame_header[] = {"frame_index", "timestamp_s"};
  CsvFile frames;
  read_csv(frames_dir / "frames.csv", frame_header, frames, false);
  std::map<std::int64_t, std::size_t> by_index;
  for (std::size_t r = 0; r < frames.rows.size(); ++r) {
    const auto& row = frames.rows[r];
    if (row.size() != 2) throw ParseError(frames.where, frames.line_numbers[r], "expected 2 fields");
    FrameRecord f;
    f.frame_index = parse_number<std::int64_t>(row[0], frames.where, frames.line_numbers[r]);
    f.timestamp_s = parse_number<double>(row[1], frames.where, frames.line_numbers[r]);
    if (!s.frames.empty() && !(f.timestamp_s > s.frames.back().timestamp_s))
      throw ParseError(frames.where, frames.line_numbers[r], "timestamps must be strictly increasing");
    if (!by_index.emplace(f.frame_index, s.frames.size()).second)
      throw ParseError(frames.where, frames.line_numbers[r], "duplicate frame_index");
    s.frames.push_back(std::move(f));
  }

  const fs::path features_path = frames_dir / "features.csv";
  if (fs::exists(features_path)) {
    static constexpr std::string_view h[] = {"frame_index"};
    CsvFile feats;
    read_csv(features_path, h, feats, true);
    std::size_t width = 0;
    for (std::size_t r = 0; r < feats.rows.size(); ++r) {
      const auto& row = feats.rows[r];
      if (row.size() < 2) throw ParseError(feats.where, feats.line_numbers[r], "feature row without values");
      if (width == 0) width = row.size() - 1;
      if (row.size() - 1 != width) throw ParseError(feats.where, feats.line_numbers[r], "ragged feature row");
      const auto idx = parse_number<std::int64_t>(row[0], feats.where, feats.line_numbers[r]);
      auto it = by_index.find(idx);
      if (it == by_index.end()) throw ParseError(feats.where, feats.line_numbers[r], "unknown frame_index");
      std::vector<double> v;
      for (std::size_t i = 1; i < row.size(); ++i) v.push_back(parse_number<double>(row[i], feats.where, feats.line_numbers[r]));
      s.frames[it->second].payload = std::move(v);
    }
    for (const FrameRecord& f : s.frames)
      if (!std::holds_alternative<std::vector<double>>(f.payload))
        throw IngestError(features_path.string() + ": no features for frame " + std::to_string(f.frame_index));
  } else {
    for (FrameRecord& f : s.frames) f.payload = read_pgm(frames_dir / (std::to_string(f.frame_index) + ".pgm"));
  }

  const fs::path landmarks_path = frames_dir / "landmarks.csv";
  if (fs::exists(landmarks_path)) {
    static constexpr std::string_view h[] = {"frame_index"};
    CsvFile lm;
    read_csv(landmarks_path, h, lm, true);
    for (std::size_t r = 0; r < lm.rows.size(); ++r) {
      const auto& row = lm.rows[r];
      if (row.size() < 3 || (row.size() - 1) % 2 != 0)
        throw ParseError(lm.where, lm.line_numbers[r], "landmarks need x,y pairs");
      const auto idx = parse_number<std::int64_t>(row[0], lm.where, lm.line_numbers[r]);
      auto it = by_index.find(idx);
      if (it == by_index.end()) throw ParseError(lm.where, lm.line_numbers[r], "unknown frame_index");
      auto& pts = s.frames[it->second].landmarks;
      for (std::size_t i = 1; i + 1 < row.size(); i += 2)
        pts.push_back({parse_number<double>(row[i], lm.where, lm.line_numbers[r]),
                       parse_number<double>(row[i + 1], lm.where, lm.line_numbers[r])});
    }
  }
  return s;
}

std::vector<SessionData> load_corpus(const fs::path& root) {
  auto labels = read_labels(root / "labels.jsonl");
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.session < b.session; });
  std::vector<SessionData> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0 && labels[i].session == labels[i - 1].session)
      throw ValidationError("labels.jsonl lists session '" + labels[i].session + "' twice");
    SessionData s = load_session(root / labels[i].session);
    s.subject_id = labels[i].subject;
    s.label = labels[i].label;
    out.push_back(std::move(s));
  }
  return out;
}

void write_samples(const fs::path& path, const std::vector<SyncedSample>& samples) {
  auto os = open_out(path, true);
  const std::uint32_t seg_len = samples.empty() ? kSegmentLength : static_cast<std::uint32_t>(samples[0].segments[0].window.size());
  os.write(kSampleMagic, sizeof kSampleMagic);
  put<std::uint32_t>(os, kSampleFileVersion);
  put<std::uint32_t>(os, seg_len);
  put<std::uint32_t>(os, 2);
  put<std::uint64_t>(os, samples.size());
  for (const SyncedSample& s : samples) {
    put_string(os, s.subject_id);
    put_string(os, s.session_id);
    put<std::int64_t>(os, s.frame_index);
    put<double>(os, s.timestamp_s);
    put<std::uint8_t>(os, s.labeled ? 1 : 0);
    put<double>(os, s.label.valence);
    put<double>(os, s.label.arousal);
    put<double>(os, s.label.liking);
    put_doubles(os, s.label.emotions);
    for (const BioSegment& seg : s.segments) {
      if (seg.window.size() != seg_len) throw UsageError("write_samples: inconsistent segment length");
      put_doubles(os, seg.window);
    }
    if (const auto* img = std::get_if<Image>(&s.face)) {
      put<std::uint8_t>(os, 0);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(img->height));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(img->width));
      put_doubles(os, img->pixels);
    } else {
      const auto& v = std::get<std::vector<double>>(s.face);
      put<std::uint8_t>(os, 1);
      put<std::uint32_t>(os, 1);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
      put_doubles(os, v);
    }
  }
  if (!os) throw Error("write failed for " + path.string());
}

std::vector<SyncedSample> read_samples(const fs::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open " + where);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kSampleMagic, sizeof magic) != 0)
    throw IngestError(where + ": not a sample file");
  const auto version = get<std::uint32_t>(is, where);
  if (version != kSampleFileVersion) throw IngestError(where + ": unsupported sample file version");
  const auto seg_len = get<std::uint32_t>(is, where);
  const auto channels = get<std::uint32_t>(is, where);
  if (channels != 2) throw IngestError(where + ": expected 2 channels");
  const auto count = get<std::uint64_t>(is, where);
  std::vector<SyncedSample> out(count);
  for (SyncedSample& s : out) {
    s.subject_id = get_string(is, where);
    s.session_id = get_string(is, where);
    s.frame_index = get<std::int64_t>(is, where);
    s.timestamp_s = get<double>(is, where);
    s.labeled = get<std::uint8_t>(is, where) != 0;
    s.label.valence = get<double>(is, where);
    s.label.arousal = get<double>(is, where);
    s.label.liking = get<double>(is, where);
    get_doubles(is, s.label.emotions, where);
    for (Channel c : kChannels) {
      BioSegment& seg = s.segments[static_cast<std::size_t>(c)];
      seg.channel = c;
      seg.frame_index = s.frame_index;
      seg.window.resize(seg_len);
      get_doubles(is, seg.window, where);
    }
    const auto kind = get<std::uint8_t>(is, where);
    const auto h = get<std::uint32_t>(is, where);
    const auto w = get<std::uint32_t>(is, where);
    if (kind == 0) {
      Image img(h, w);
      get_doubles(is, img.pixels, where);
      s.face = std::move(img);
    } else if (kind == 1) {
      std::vector<double> v(static_cast<std::size_t>(h) * w);
      get_doubles(is, v, where);
      s.face = std::move(v);
    } else {
      throw IngestError(where + ": unknown face payload kind");
    }
  }
  return out;
}

}  // namespace biomm
