#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "lgtse/common/rng.hpp"
#include "lgtse/dsp/drc.hpp"
#include "lgtse/dsp/erb.hpp"
#include "lgtse/dsp/stft.hpp"
#include "lgtse/dsp/waveform.hpp"

using namespace lgtse;

namespace {

Waveform random_wave(std::uint64_t seed, std::size_t n, int sr = 8000) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (auto& v : w.samples) v = rng.uniform(-0.8, 0.8);
  return w;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

// Independent oracle: direct windowed DFT of one centre-padded frame,
// evaluated straight from the definition (reflective padding included).
std::vector<std::complex<double>> frame_dft_oracle(const Waveform& w, const StftConfig& cfg,
                                                   std::size_t frame) {
  const std::size_t win = cfg.fft_size(w.sample_rate);
  const std::size_t hop = cfg.hop(w.sample_rate);
  const std::size_t pad = win / 2;
  std::vector<double> x(win);
  for (std::size_t i = 0; i < win; ++i) {
    const long long idx = static_cast<long long>(frame * hop + i) - static_cast<long long>(pad);
    x[i] = w.samples[detail::reflect_index(idx, w.size())] *
           0.5 * (1.0 - std::cos(2.0 * M_PI * i / win));
  }
  std::vector<std::complex<double>> bins(win / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < win; ++n) {
      const double ang = -2.0 * M_PI * static_cast<double>(k * n) / win;
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    bins[k] = acc;
  }
  return bins;
}

}  // namespace

TEST_CASE("stft frame count follows the framing arithmetic") {
  // Oracle: centre-padded framing gives T = 1 + ceil(L / hop).
  const Waveform w = random_wave(1, 8000);
  const StftConfig cfg;
  auto spec = stft<double>(w, cfg);
  const std::size_t hop = cfg.hop(w.sample_rate);
  const std::size_t expect = 1 + (w.size() + hop - 1) / hop;
  CHECK(expect == 126);
  CHECK(spec.frames() == expect);
  CHECK(spec.data.dim(0) == 2 * 129);
  CHECK(spec.compressed == false);

  // Non-divisible length.
  const Waveform w2 = random_wave(2, 8001);
  CHECK(stft<double>(w2, cfg).frames() == 1 + (8001 + 63) / 64);
}

TEST_CASE("stft of all-zero waveform is all zero") {
  Waveform w;
  w.samples.assign(4000, 0.0);
  auto spec = stft<double>(w);
  for (std::size_t i = 0; i < spec.data.size(); ++i) CHECK(spec.data[i] == 0.0);
}

TEST_CASE("stft rejects sub-window input") {
  Waveform w = random_wave(3, 255);
  CHECK_THROWS_AS(stft<double>(w), InvalidInputError);
}

TEST_CASE("stft matches the direct windowed DFT oracle; sinusoid energy is concentrated") {
  const int sr = 8000;
  const StftConfig cfg;
  const std::size_t win = cfg.fft_size(sr);
  const std::size_t bin = 20;  // bin-centre frequency: 20 * 8000 / 256 = 625 Hz
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(8000);
  for (std::size_t n = 0; n < w.size(); ++n)
    w.samples[n] = std::sin(2.0 * M_PI * static_cast<double>(bin * n) / win);

  auto spec = stft<double>(w, cfg);
  for (std::size_t t : {std::size_t(10), std::size_t(60)}) {
    const auto oracle = frame_dft_oracle(w, cfg, t);
    double max_err = 0.0;
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      max_err = std::max(max_err, std::abs(oracle[k].real() - spec.re(k, t)));
      max_err = std::max(max_err, std::abs(oracle[k].imag() - spec.im(k, t)));
    }
    CHECK(max_err < 1e-9);

    // The Hann mainlobe spans three bins; energy is concentrated there and
    // the centre bin dominates (the oracle puts ~2/3 in it, ~1/6 each side).
    double total = 0.0, main3 = 0.0;
    std::size_t argmax = 0;
    double best = -1.0;
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      const double e = std::norm(oracle[k]);
      total += e;
      if (k + 1 >= bin && k <= bin + 1) main3 += e;
      if (e > best) {
        best = e;
        argmax = k;
      }
    }
    CHECK(argmax == bin);
    CHECK(main3 / total > 0.90);
    CHECK(std::norm(oracle[bin]) / total > 0.5);
  }
}

TEST_CASE("istft reconstructs exactly (double) and to 1e-6 (float)") {
  const Waveform w = random_wave(7, 8000);
  {
    auto spec = stft<double>(w);
    Waveform rec = istft(spec);
    REQUIRE(rec.size() == w.size());
    CHECK(rel_l2(rec.samples, w.samples) < 1e-12);
  }
  {
    auto spec = stft<float>(w);
    Waveform rec = istft(spec);
    CHECK(rel_l2(rec.samples, w.samples) < 1e-6);
  }
  // Length not divisible by hop.
  const Waveform w2 = random_wave(8, 6013);
  CHECK(rel_l2(istft(stft<double>(w2)).samples, w2.samples) < 1e-12);
}

TEST_CASE("istft of zero spec is zero; chirp round trip is tight") {
  auto spec = stft<double>(random_wave(9, 4000));
  spec.data.fill(0.0);
  Waveform rec = istft(spec);
  for (double v : rec.samples) CHECK(v == 0.0);

  // Speech-shaped chirp sweeping 100 -> 2000 Hz.
  Waveform chirp;
  chirp.sample_rate = 8000;
  chirp.samples.resize(8000);
  double phase = 0.0;
  for (std::size_t n = 0; n < chirp.size(); ++n) {
    const double t = static_cast<double>(n) / 8000.0;
    phase += 2.0 * M_PI * (100.0 + 1900.0 * t) / 8000.0;
    chirp.samples[n] = 0.7 * std::sin(phase);
  }
  Waveform rec2 = istft(stft<double>(chirp));
  double max_abs = 0.0;
  for (std::size_t n = 0; n < chirp.size(); ++n)
    max_abs = std::max(max_abs, std::abs(rec2.samples[n] - chirp.samples[n]));
  CHECK(max_abs < 1e-5);
}

TEST_CASE("istft refuses compressed specs") {
  auto spec = stft<double>(random_wave(10, 4000));
  auto comp = drc_compress(spec);
  CHECK_THROWS_AS(istft(comp), InvalidStateError);
}

TEST_CASE("stft is linear") {
  const Waveform w1 = random_wave(11, 8000), w2 = random_wave(12, 8000);
  const double a = 0.7, b = -1.3;
  Waveform mixp;
  mixp.sample_rate = 8000;
  mixp.samples.resize(8000);
  for (std::size_t i = 0; i < 8000; ++i)
    mixp.samples[i] = a * w1.samples[i] + b * w2.samples[i];
  auto s1 = stft<double>(w1), s2 = stft<double>(w2), sm = stft<double>(mixp);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sm.data.size(); ++i) {
    const double lin = a * s1.data[i] + b * s2.data[i];
    num += (sm.data[i] - lin) * (sm.data[i] - lin);
    den += lin * lin;
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("Parseval-style window-weighted energy consistency") {
  const StftConfig cfg;
  const Waveform w = random_wave(13, 8000);
  auto spec = stft<double>(w, cfg);
  const std::size_t win = cfg.fft_size(8000), hop = cfg.hop(8000), pad = win / 2;

  // Two-sided spectral energy per frame equals N * windowed-frame energy.
  double e_frames = 0.0;
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t k = 0; k < spec.bins(); ++k) {
      const double e = spec.re(k, t) * spec.re(k, t) + spec.im(k, t) * spec.im(k, t);
      e_frames += (k == 0 || k == spec.bins() - 1) ? e : 2.0 * e;
    }
  }
  e_frames /= static_cast<double>(win);

  // Window-weighted time-domain energy of the padded signal.
  const auto window = hann_periodic<double>(win);
  double e_time = 0.0;
  for (std::size_t t = 0; t < spec.frames(); ++t)
    for (std::size_t i = 0; i < win; ++i) {
      const long long idx = static_cast<long long>(t * hop + i) - static_cast<long long>(pad);
      const double x = w.samples[detail::reflect_index(idx, w.size())];
      e_time += window[i] * window[i] * x * x;
    }
  CHECK(std::abs(e_frames - e_time) / e_time < 1e-5);
}

TEST_CASE("drc compress/expand") {
  const DrcConfig drc;  // beta = 0.5
  StftConfig cfg;
  ComplexSpec<double> s;
  s.config = cfg;
  s.sample_rate = 8000;
  s.data = Tensor<double>({4, 1});
  // One bin (F=2): magnitude 4 at phase pi/3, other bin magnitude 1 at 0.
  s.data.at(0, 0) = 4.0 * std::cos(M_PI / 3.0);
  s.data.at(2, 0) = 4.0 * std::sin(M_PI / 3.0);
  s.data.at(1, 0) = 1.0;
  s.data.at(3, 0) = 0.0;

  auto c = drc_compress(s, drc);
  CHECK(c.compressed);
  CHECK(c.magnitude(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c.phase(0, 0) == doctest::Approx(M_PI / 3.0).epsilon(1e-12));
  CHECK(c.magnitude(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(drc_compress(c, drc), InvalidStateError);

  auto e = drc_expand(c, drc);
  CHECK(!e.compressed);
  CHECK(e.magnitude(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_THROWS_AS(drc_expand(e, drc), InvalidStateError);
}

TEST_CASE("drc zero-magnitude bins stay zero with pinned phase") {
  StftConfig cfg;
  ComplexSpec<double> s;
  s.config = cfg;
  s.data = Tensor<double>({2, 1});  // F=1, single zero bin
  auto c = drc_compress(s);
  CHECK(c.data.at(0, 0) == 0.0);
  CHECK(c.data.at(1, 0) == 0.0);
  CHECK(c.phase(0, 0) == 0.0);
}

TEST_CASE("drc round trip on a random spec is 1e-9 tight and preserves phase") {
  auto spec = stft<double>(random_wave(21, 8000));
  auto c = drc_compress(spec);
  // Phase comparison via cross product, zero up to rounding.
  for (std::size_t k = 0; k < spec.bins(); k += 7)
    for (std::size_t t = 0; t < spec.frames(); t += 11) {
      const double cross =
          c.im(k, t) * spec.re(k, t) - c.re(k, t) * spec.im(k, t);
      const double mag2 = spec.magnitude(k, t) * spec.magnitude(k, t);
      if (mag2 > 0) CHECK(std::abs(cross) / mag2 < 1e-12);
    }
  auto e = drc_expand(c);
  double max_rel = 0.0;
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    const double den = std::max(std::abs(spec.data[i]), 1e-30);
    max_rel = std::max(max_rel, std::abs(e.data[i] - spec.data[i]) / den);
  }
  CHECK(max_rel < 1e-9);
}

TEST_CASE("erb filterbank structure") {
  const std::size_t F = 129;
  ErbFilterbank fb(F, 64, 8000);
  const auto& P = fb.projection();

  // Rows are nonnegative and sum to one: bands are convex combinations.
  for (std::size_t b = 0; b < 64; ++b) {
    double s = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      CHECK(P.at(b, f) >= 0.0);
      s += P.at(b, f);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Flat unit spectrum projects to all-positive bands.
  Tensor<double> flat({F, 1});
  flat.fill(1.0);
  auto banded = fb.project(flat);
  for (std::size_t b = 0; b < 64; ++b) CHECK(banded.at(b, 0) > 0.0);

  // A single-bin impulse lands in at most two adjacent bands.
  for (std::size_t f = 0; f < F; f += 5) {
    std::size_t nonzero = 0;
    std::size_t first = 0, last = 0;
    for (std::size_t b = 0; b < 64; ++b)
      if (P.at(b, f) > 0.0) {
        if (nonzero == 0) first = b;
        last = b;
        ++nonzero;
      }
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 2);
    if (nonzero == 2) CHECK(last == first + 1);
  }
}

TEST_CASE("erb project/unproject: idempotence on range and speech-band energy") {
  const std::size_t F = 129;
  ErbFilterbank fb(F, 64, 8000);

  // project . unproject . project == project (P U = I).
  Rng rng(77);
  Tensor<double> x({F, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 2.0);
  auto p1 = fb.project(x);
  auto p2 = fb.project(fb.unproject(p1));
  double max_rel = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i)
    max_rel = std::max(max_rel, std::abs(p2[i] - p1[i]) / std::max(std::abs(p1[i]), 1e-12));
  CHECK(max_rel < 1e-6);

  // Speech-shaped magnitude spectrum (formant bumps): energy through the
  // round trip is preserved within 5%.
  Tensor<double> speech({F, 1});
  for (std::size_t f = 0; f < F; ++f) {
    const double hz = 4000.0 * static_cast<double>(f) / (F - 1);
    double v = 0.1;
    for (double cf : {500.0, 1400.0, 2600.0})
      v += std::exp(-0.5 * std::pow((hz - cf) / 320.0, 2.0));
    speech.at(f, 0) = v / (1.0 + hz / 1200.0);
  }
  auto rec = fb.unproject(fb.project(speech));
  double e_in = 0.0, e_out = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    e_in += speech.at(f, 0) * speech.at(f, 0);
    e_out += rec.at(f, 0) * rec.at(f, 0);
  }
  CHECK(std::abs(e_out - e_in) / e_in < 0.05);
}

TEST_CASE("erb rejects bad band counts") {
  CHECK_THROWS_AS(ErbFilterbank(129, 129, 8000), InvalidInputError);
  CHECK_THROWS_AS(ErbFilterbank(129, 200, 8000), InvalidInputError);
  CHECK_THROWS_AS(ErbFilterbank(129, 1, 8000), InvalidInputError);
}
