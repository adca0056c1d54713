#include "ddm2/phantom.hpp"

#include <cmath>
#include <numbers>

#include "ddm2/rng.hpp"

namespace ddm2 {

std::vector<PhantomEllipse> default_phantom_ellipses() {
  std::vector<PhantomEllipse> e;
  // outer disc (head)
  e.push_back({0.0, 0.0, 0.84, 0.90, 0.0, 0.30, 0.04, 0.0, false});
  // mid-intensity structure whose size varies with z
  e.push_back({-0.28, -0.18, 0.34, 0.42, 0.4, 0.25, 0.10, 1.1, true});
  // brightest structure; fixed geometry, used as the signal ROI
  e.push_back({0.32, 0.22, 0.24, 0.32, -0.5, 0.35, 0.08, 2.3, false});
  // small low-contrast lesion
  e.push_back({0.05, -0.42, 0.12, 0.10, 0.0, 0.18, 0.12, 4.0, true});
  return e;
}

namespace {

bool inside_ellipse(const PhantomEllipse& e, double x, double y, double radius_scale) {
  double dx = x - e.cx, dy = y - e.cy;
  double ca = std::cos(e.angle), sa = std::sin(e.angle);
  double u = (ca * dx + sa * dy) / (e.rx * radius_scale);
  double v = (-sa * dx + ca * dy) / (e.ry * radius_scale);
  return u * u + v * v <= 1.0;
}

}  // namespace

PhantomPair make_phantom(const PhantomSpec& spec) {
  if (spec.w < 4 || spec.h < 4 || spec.d < 1 || spec.l < 2)
    throw Error(ErrorKind::ConfigInvalid, "phantom shape too small");
  if (spec.sigma < 0) throw Error(ErrorKind::ConfigInvalid, "sigma must be >= 0");

  std::vector<PhantomEllipse> ellipses =
      spec.ellipses.empty() ? default_phantom_ellipses() : spec.ellipses;

  PhantomPair out;
  out.clean = Volume4D(spec.w, spec.h, spec.d, spec.l);
  out.clean.source_id = "phantom";
  out.noisy = out.clean;

  for (int vol = 0; vol < spec.l; vol++) {
    for (int z = 0; z < spec.d; z++) {
      // structures with z_scaled shrink toward the first/last slice
      double zc = spec.d == 1 ? 1.0
                              : 1.0 - std::abs(2.0 * z - (spec.d - 1)) / double(spec.d - 1);
      double zscale = 0.7 + 0.3 * zc;
      for (int y = 0; y < spec.h; y++) {
        double ny = spec.h == 1 ? 0.0 : 2.0 * y / double(spec.h - 1) - 1.0;
        for (int x = 0; x < spec.w; x++) {
          double nx = spec.w == 1 ? 0.0 : 2.0 * x / double(spec.w - 1) - 1.0;
          double val = spec.background;
          for (const PhantomEllipse& e : ellipses) {
            if (!inside_ellipse(e, nx, ny, e.z_scaled ? zscale : 1.0)) continue;
            double mod = 1.0 + e.mod_amp * std::cos(2.0 * std::numbers::pi * vol / spec.l +
                                                    e.mod_phase);
            val += e.intensity * mod;
          }
          out.clean.at(x, y, z, vol) = std::clamp(val, 0.0, 1.0);
        }
      }
    }
  }

  out.noisy = out.clean;
  if (spec.sigma > 0) {
    Rng rng(mix_seed(spec.seed, 0x9fa7703aULL));
    if (spec.noise == PhantomNoise::gaussian) {
      for (double& v : out.noisy.data) v += rng.normal(0.0, spec.sigma);
    } else {
      for (double& v : out.noisy.data) {
        double re = v + rng.normal(0.0, spec.sigma);
        double im = rng.normal(0.0, spec.sigma);
        v = std::sqrt(re * re + im * im);
      }
    }
  }

  // ROI masks: signal inside a shrunk copy of the brightest structure,
  // background outside a grown copy of the disc (pure-noise region)
  const PhantomEllipse& disc = ellipses[0];
  const PhantomEllipse& bright = ellipses.size() > 2 ? ellipses[2] : ellipses.back();
  out.masks.rows = spec.h;
  out.masks.cols = spec.w;
  out.masks.signal.assign(size_t(spec.h) * spec.w, 0);
  out.masks.background.assign(size_t(spec.h) * spec.w, 0);
  out.masks.provenance = "phantom-geometry";
  for (int y = 0; y < spec.h; y++) {
    double ny = spec.h == 1 ? 0.0 : 2.0 * y / double(spec.h - 1) - 1.0;
    for (int x = 0; x < spec.w; x++) {
      double nx = spec.w == 1 ? 0.0 : 2.0 * x / double(spec.w - 1) - 1.0;
      size_t i = size_t(y) * spec.w + x;
      if (inside_ellipse(bright, nx, ny, 0.72)) out.masks.signal[i] = 1;
      if (!inside_ellipse(disc, nx, ny, 1.06)) out.masks.background[i] = 1;
    }
  }
  out.masks.validate();
  return out;
}

}  // namespace ddm2
