#include "bast/spatializer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "bast/hash.hpp"
#include "bast/wav.hpp"

BAST_NAMESPACE_BEGIN

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double d) { return d * kPi / 180.0; }

// sin of an azimuth on the integer-degree grid, exactly odd under
// azimuth -> 360 - azimuth so mirrored scenes render bit-identically swapped.
double lateral_sine(int azimuth_deg) {
  int a = ((azimuth_deg % 360) + 360) % 360;
  if (a == 0 || a == 180) return 0.0;
  const bool right = a < 180;
  const int mag = right ? a : 360 - a;
  const double s = std::sin(deg2rad(mag));
  return right ? s : -s;
}

double frontal_cosine(int azimuth_deg) {
  int a = ((azimuth_deg % 360) + 360) % 360;
  const int mag = a <= 180 ? a : 360 - a;
  return std::cos(deg2rad(mag));
}

void peak_normalize(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx > 0.0) {
    for (double& v : x) v *= peak / mx;
  }
}

// First-order head-shadow shelf H(s) = (alpha s + beta) / (s + beta),
// beta = 2c/a, discretized with the bilinear transform. alpha is the
// high-frequency gain; DC gain is 1.
std::vector<double> head_shadow(const std::vector<double>& x, double alpha, double beta, double fs) {
  const double k = 2.0 * fs;
  const double a0 = k + beta;
  const double b0 = (alpha * k + beta) / a0;
  const double b1 = (beta - alpha * k) / a0;
  const double a1 = (beta - k) / a0;
  std::vector<double> y(x.size());
  double x1 = 0.0, y1 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = b0 * x[n] + b1 * x1 - a1 * y1;
    x1 = x[n];
    y1 = v;
    y[n] = v;
  }
  return y;
}

// Adds gain * x delayed by `delay` samples into out, using an 8-tap
// Hann-windowed sinc interpolator for the fractional part.
void add_delayed(std::vector<double>& out, const std::vector<double>& x, double delay, double gain) {
  const double whole = std::floor(delay);
  const double frac = delay - whole;
  const long d = static_cast<long>(whole);
  constexpr int kFirst = -3, kLast = 4;
  double taps[kLast - kFirst + 1];
  for (int m = kFirst; m <= kLast; ++m) {
    const double t = m - frac;
    double h;
    if (t == 0.0) {
      h = 1.0;
    } else {
      h = std::sin(kPi * t) / (kPi * t);
      h *= std::abs(t) < 4.0 ? 0.5 * (1.0 + std::cos(kPi * t / 4.0)) : 0.0;
    }
    taps[m - kFirst] = gain * h;
  }
  const long len = static_cast<long>(out.size());
  const long xlen = static_cast<long>(x.size());
  for (int m = kFirst; m <= kLast; ++m) {
    const double h = taps[m - kFirst];
    if (h == 0.0) continue;
    const long shift = d + m;
    const long start = std::max(0L, shift);
    const long stop = std::min(len, xlen + shift);
    for (long n = start; n < stop; ++n) out[static_cast<std::size_t>(n)] += h * x[static_cast<std::size_t>(n - shift)];
  }
}

struct Image {
  double dx, dy, dz;  // listener-relative offset, metres
  double distance;
  double gain;  // reflection attenuation / distance
};

// Image sources up to `order` reflections. Offsets are formed as an exact
// constant plus +/- the source offset, so the set is exactly mirror-symmetric
// when the listener is centred in x.
std::vector<Image> image_sources(const std::array<double, 3>& rel, const SceneConfig& scene) {
  const int order = scene.reflection_order;
  const double beta = std::sqrt(1.0 - scene.absorption);
  struct AxisImage {
    double offset;
    int reflections;
  };
  std::array<std::vector<AxisImage>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const double L = scene.room[a];
    const double l = scene.listener[a];
    for (int n = -order; n <= order; ++n) {
      for (int q = 0; q <= 1; ++q) {
        const int refl = std::abs(n - q) + std::abs(n);
        if (refl > order) continue;
        const double c = q == 0 ? 2.0 * n * L : 2.0 * n * L - 2.0 * l;
        axes[a].push_back({q == 0 ? c + rel[a] : c - rel[a], refl});
      }
    }
  }
  std::vector<Image> out;
  for (const auto& ix : axes[0]) {
    for (const auto& iy : axes[1]) {
      for (const auto& iz : axes[2]) {
        const int refl = ix.reflections + iy.reflections + iz.reflections;
        if (refl > order) continue;
        Image im;
        im.dx = ix.offset;
        im.dy = iy.offset;
        im.dz = iz.offset;
        im.distance = std::sqrt(im.dx * im.dx + im.dy * im.dy + im.dz * im.dz);
        im.gain = std::pow(beta, refl) / im.distance;
        out.push_back(im);
      }
    }
  }
  // Mirror-invariant order; ties differ only in the sign of dx.
  std::sort(out.begin(), out.end(), [](const Image& a, const Image& b) {
    return std::make_tuple(a.distance, std::abs(a.dx), a.dy, a.dz, -a.dx) <
           std::make_tuple(b.distance, std::abs(b.dx), b.dy, b.dz, -b.dx);
  });
  return out;
}

void render_image(const std::vector<double>& src, const Image& im, const SceneConfig& scene, std::vector<double>& left,
                  std::vector<double>& right) {
  const double fs = scene.sample_rate;
  const double c = scene.speed_of_sound;
  // Lateral sine relative to the interaural (x) axis; odd in dx.
  const double s = im.dx / im.distance;
  const double mag = std::min(1.0, std::abs(s));
  const double half_itd = 0.5 * (scene.head_radius / c) * (std::asin(mag) + mag) * fs;
  const double signed_half = s < 0.0 ? -half_itd : half_itd;
  const double arrival = im.distance / c * fs;
  const double beta = 2.0 * c / scene.head_radius;
  const double ks = scene.ild_strength * s;
  const auto l = head_shadow(src, 1.0 - ks, beta, fs);
  const auto r = head_shadow(src, 1.0 + ks, beta, fs);
  add_delayed(left, l, arrival + signed_half, im.gain);
  add_delayed(right, r, arrival - signed_half, im.gain);
}

}  // namespace

std::string environment_tag(Environment env) { return env == Environment::Anechoic ? "AE" : "RV"; }

Environment parse_environment(const std::string& tag) {
  if (tag == "AE") return Environment::Anechoic;
  if (tag == "RV") return Environment::Reverberant;
  throw ParameterError("unknown environment '" + tag + "' (expected AE or RV)");
}

LocalizationTarget LocalizationTarget::at(int azimuth_deg, Environment env) {
  if (azimuth_deg < 0 || azimuth_deg >= 360) throw ParameterError("azimuth must lie in [0, 360)");
  LocalizationTarget t;
  t.azimuth_deg = azimuth_deg;
  t.x = lateral_sine(azimuth_deg);
  t.y = frontal_cosine(azimuth_deg);
  t.environment = env;
  return t;
}

SceneConfig SceneConfig::anechoic() {
  SceneConfig s;
  s.reflection_order = 0;
  return s;
}

SceneConfig SceneConfig::reverberant() { return SceneConfig{}; }

std::string SceneConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "room=" << room[0] << ',' << room[1] << ',' << room[2] << " listener=" << listener[0] << ',' << listener[1]
     << ',' << listener[2] << " distance=" << source_distance << " head=" << head_radius << " c=" << speed_of_sound
     << " absorption=" << absorption << " order=" << reflection_order << " ild=" << ild_strength
     << " fs=" << sample_rate << " seed=" << seed;
  return os.str();
}

std::string source_kind_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::WhiteNoise:
      return "white-noise";
    case SourceKind::ToneComplex:
      return "tone-complex";
    case SourceKind::AmNoise:
      return "am-noise";
    case SourceKind::Chirp:
      return "chirp";
  }
  return "?";
}

SourceKind parse_source_kind(const std::string& name) {
  for (auto k : {SourceKind::WhiteNoise, SourceKind::ToneComplex, SourceKind::AmNoise, SourceKind::Chirp}) {
    if (source_kind_name(k) == name) return k;
  }
  throw ParameterError("unknown source kind '" + name + "'");
}

Waveform make_source(SourceKind kind, double duration_s, std::uint64_t seed, double sample_rate) {
  if (!(duration_s > 0.0) || !(sample_rate > 0.0)) throw ParameterError("duration and sample rate must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  const double nyquist = sample_rate / 2.0;
  switch (kind) {
    case SourceKind::WhiteNoise:
      for (auto& v : x) v = normal(rng);
      break;
    case SourceKind::ToneComplex: {
      const double f0 = 150.0 + 450.0 * unit(rng);
      for (int k = 1; k * f0 < 0.9 * nyquist; ++k) {
        const double phase = 2.0 * kPi * unit(rng);
        const double amp = 1.0 / k;
        const double w = 2.0 * kPi * k * f0 / sample_rate;
        for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(w * static_cast<double>(i) + phase);
      }
      break;
    }
    case SourceKind::AmNoise: {
      const double fm = 4.0 + 12.0 * unit(rng);
      const double depth = 0.5 + 0.4 * unit(rng);
      const double phase = 2.0 * kPi * unit(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        x[i] = normal(rng) * (1.0 + depth * std::sin(2.0 * kPi * fm * t + phase));
      }
      break;
    }
    case SourceKind::Chirp: {
      const double f_start = 100.0 + 200.0 * unit(rng);
      const double f_end = 4000.0 + 3000.0 * unit(rng);
      const bool rising = unit(rng) < 0.5;
      const double fa = rising ? f_start : f_end, fb = rising ? f_end : f_start;
      const double k = std::log(fb / fa) / duration_s;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        x[i] = std::sin(2.0 * kPi * fa * (std::exp(k * t) - 1.0) / k);
      }
      break;
    }
  }
  peak_normalize(x, 0.9);
  Waveform w;
  w.sample_rate = sample_rate;
  w.channels.push_back(std::move(x));
  return w;
}

double woodworth_itd(double azimuth_rad, double head_radius, double speed_of_sound) {
  const double s = std::sin(azimuth_rad);
  const double lateral = std::asin(std::clamp(s, -1.0, 1.0));
  return head_radius / speed_of_sound * (lateral + std::sin(lateral));
}

Waveform render_binaural(const Waveform& source, const LocalizationTarget& target, const SceneConfig& scene) {
  if (source.channel_count() != 1) throw InputError("render_binaural expects a mono source");
  if (target.azimuth_deg < 0 || target.azimuth_deg >= 360 || target.azimuth_deg % 10 != 0) {
    throw ParameterError("azimuth " + std::to_string(target.azimuth_deg) + " is not on the 10 degree grid");
  }
  if (scene.reflection_order < 0) throw ParameterError("reflection order must be nonnegative");
  if (!(scene.absorption > 0.0 && scene.absorption <= 1.0)) throw ParameterError("absorption must lie in (0, 1]");
  const std::array<double, 3> rel{scene.source_distance * lateral_sine(target.azimuth_deg),
                                  scene.source_distance * frontal_cosine(target.azimuth_deg), 0.0};
  for (int a = 0; a < 3; ++a) {
    const double l = scene.listener[a];
    if (!(l > 0.0 && l < scene.room[a])) throw GeometryError("listener lies outside the room");
    const double s = l + rel[a];
    if (!(s > 0.0 && s < scene.room[a])) throw GeometryError("source lies outside the room");
  }

  const auto& src = source.channels.front();
  Waveform out;
  out.sample_rate = scene.sample_rate;
  out.channels.assign(2, std::vector<double>(src.size(), 0.0));
  auto& left = out.channels[0];
  auto& right = out.channels[1];

  const auto images = image_sources(rel, scene);
  const double max_delay = static_cast<double>(src.size()) + 8.0;
  std::vector<double> gl(src.size()), gr(src.size()), tl(src.size()), tr(src.size());
  for (std::size_t i = 0; i < images.size();) {
    // Group mirror twins (same key up to the sign of dx) and sum them before
    // accumulating, which keeps left/right swaps exact.
    std::size_t j = i + 1;
    while (j < images.size() && images[j].distance == images[i].distance &&
           std::abs(images[j].dx) == std::abs(images[i].dx) && images[j].dy == images[i].dy &&
           images[j].dz == images[i].dz) {
      ++j;
    }
    if (images[i].distance / scene.speed_of_sound * scene.sample_rate > max_delay) break;
    std::fill(gl.begin(), gl.end(), 0.0);
    std::fill(gr.begin(), gr.end(), 0.0);
    render_image(src, images[i], scene, gl, gr);
    for (std::size_t k = i + 1; k < j; ++k) {
      std::fill(tl.begin(), tl.end(), 0.0);
      std::fill(tr.begin(), tr.end(), 0.0);
      render_image(src, images[k], scene, tl, tr);
      for (std::size_t n = 0; n < src.size(); ++n) {
        gl[n] += tl[n];
        gr[n] += tr[n];
      }
    }
    for (std::size_t n = 0; n < src.size(); ++n) {
      left[n] += gl[n];
      right[n] += gr[n];
    }
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string split_name(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ParameterError("unknown split '" + name + "'");
}

std::vector<int> DatasetSpec::full_circle() {
  std::vector<int> az;
  for (int a = 0; a < 360; a += 10) az.push_back(a);
  return az;
}

std::vector<SourceSpec> DatasetSpec::synthetic_sources(std::size_t count, std::uint64_t seed, const std::string& prefix) {
  static constexpr SourceKind kinds[] = {SourceKind::WhiteNoise, SourceKind::ToneComplex, SourceKind::AmNoise,
                                         SourceKind::Chirp};
  std::vector<SourceSpec> out;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SourceSpec s;
    s.kind = kinds[i % 4];
    s.seed = rng();
    s.id = prefix + std::to_string(i);
    out.push_back(s);
  }
  return out;
}

const SceneConfig& DatasetSpec::scene(Environment env) const {
  return env == Environment::Anechoic ? anechoic : reverberant;
}

std::string DatasetSpec::config_hash() const {
  std::ostringstream os;
  os.precision(17);
  os << "ratio=" << split_ratio << " duration=" << duration_s << " seed=" << seed << '\n';
  for (const auto& s : sources) os << "src " << s.id << ' ' << source_kind_name(s.kind) << ' ' << s.seed << '\n';
  for (const auto& s : test_sources) os << "test " << s.id << ' ' << source_kind_name(s.kind) << ' ' << s.seed << '\n';
  os << "az";
  for (int a : azimuths) os << ' ' << a;
  os << "\nenv";
  for (auto e : environments) os << ' ' << environment_tag(e);
  os << "\nAE " << anechoic.describe() << "\nRV " << reverberant.describe() << "\ngain " << kCorpusGain;
  return hash_hex(fnv1a64(os.str()));
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const DatasetEntry& e) { return e.split == split; }));
}

DatasetManifest build_manifest(const DatasetSpec& spec) {
  if (!(spec.split_ratio > 0.0 && spec.split_ratio < 1.0)) {
    throw ParameterError("split ratio must lie in (0, 1), got " + std::to_string(spec.split_ratio));
  }
  if (spec.sources.empty()) throw ParameterError("dataset needs at least one source per azimuth");
  if (spec.azimuths.empty() || spec.environments.empty()) throw ParameterError("dataset needs azimuths and environments");
  for (const auto& t : spec.test_sources) {
    for (const auto& s : spec.sources) {
      if (s.id == t.id) throw ParameterError("source id '" + s.id + "' is in both the training pool and the test set");
    }
  }
  DatasetManifest m;
  m.config_hash = spec.config_hash();
  auto entry = [&](const SourceSpec& s, int az, Environment env, Split split) {
    DatasetEntry e;
    e.source_id = s.id;
    e.azimuth_deg = az;
    e.environment = env;
    e.split = split;
    e.id = s.id + "_az" + std::to_string(az) + "_" + environment_tag(env);
    e.path = environment_tag(env) + "/" + e.id + ".wav";
    return e;
  };
  for (auto env : spec.environments) {
    for (int az : spec.azimuths) {
      std::vector<std::size_t> order(spec.sources.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::mt19937_64 rng(spec.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(az + 1)) ^
                          (env == Environment::Reverberant ? 0x5bd1e995ull : 0ull));
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t n = order.size();
      auto n_train = static_cast<std::size_t>(std::llround(spec.split_ratio * static_cast<double>(n)));
      if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
      std::vector<bool> is_train(n, false);
      for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
      for (std::size_t i = 0; i < n; ++i) {
        m.entries.push_back(entry(spec.sources[i], az, env, is_train[i] ? Split::Train : Split::Val));
      }
      for (const auto& s : spec.test_sources) m.entries.push_back(entry(s, az, env, Split::Test));
    }
  }
  return m;
}

const SourceSpec& find_source(const DatasetSpec& spec, const std::string& source_id) {
  for (const auto* list : {&spec.sources, &spec.test_sources}) {
    for (const auto& s : *list) {
      if (s.id == source_id) return s;
    }
  }
  throw ParameterError("unknown source id '" + source_id + "'");
}

Waveform render_entry(const DatasetSpec& spec, const DatasetEntry& entry) {
  const auto& s = find_source(spec, entry.source_id);
  const SceneConfig& scene = spec.scene(entry.environment);
  auto src = make_source(s.kind, spec.duration_s, s.seed, scene.sample_rate);
  return render_binaural(src, LocalizationTarget::at(entry.azimuth_deg, entry.environment), scene);
}

DatasetManifest write_corpus(const DatasetSpec& spec, const std::filesystem::path& root) {
  auto manifest = build_manifest(spec);
  for (const auto& e : manifest.entries) {
    auto w = render_entry(spec, e);
    for (auto& c : w.channels)
      for (double& v : c) v *= kCorpusGain;
    write_wav(root / e.path, w);
  }
  write_manifest(root / "manifest.tsv", manifest);
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RunError("cannot write manifest " + path.string());
  os << "# id\tazimuth\tenv\tsplit\tpath\tconfig_hash\tsource\n";
  for (const auto& e : manifest.entries) {
    os << e.id << '\t' << e.azimuth_deg << '\t' << environment_tag(e.environment) << '\t' << split_name(e.split) << '\t'
       << e.path << '\t' << manifest.config_hash << '\t' << e.source_id << '\n';
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw RunError("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    if (f.size() != 7) throw RunError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    DatasetEntry e;
    e.id = f[0];
    e.azimuth_deg = std::stoi(f[1]);
    e.environment = parse_environment(f[2]);
    e.split = parse_split(f[3]);
    e.path = f[4];
    if (m.config_hash.empty()) m.config_hash = f[5];
    if (f[5] != m.config_hash) throw RunError(path.string() + ": mixed config hashes");
    e.source_id = f[6];
    m.entries.push_back(std::move(e));
  }
  return m;
}

BAST_NAMESPACE_END
