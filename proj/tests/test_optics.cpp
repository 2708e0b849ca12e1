#include "ptycho/optics.hpp"
#include "support/oracles.hpp"
#include "ptycho/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

using namespace ptycho;

namespace {

ComplexField random_band_confined(const Grid& g, const optics::PropagationPlan& plan,
                                  std::uint64_t seed) {
    // draw a random spectrum, zero it outside the band mask, inverse transform
    ComplexField f(g);
    Rng rng(seed, "band_field");
    for (cplx& z : f.v) z = cplx(rng.normal(), rng.normal());
    optics::fft2(f);
    for (std::size_t i = 0; i < f.v.size(); ++i)
        if (!plan.band_mask[i]) f.v[i] = 0.0;
    optics::ifft2(f);
    return f;
}

} // namespace

TEST_CASE("plan: z=0 gives unit transfer on the propagating band") {
    Grid g(32, 32, 3.45e-6, 561e-9);
    const auto plan = optics::make_plan(g, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < plan.transfer.size(); ++i) {
        if (plan.band_mask[i]) {
            CHECK(plan.transfer[i] == cplx(1.0, 0.0));
            any = true;
        } else {
            CHECK(plan.transfer[i] == cplx(0.0, 0.0));
        }
    }
    CHECK(any);
}

TEST_CASE("plan: DC transfer equals exp(i 2 pi z / lambda)") {
    Grid g(64, 64, 3.45e-6, 561e-9);
    for (double z : {1e-3, 0.05, -0.02}) {
        const auto plan = optics::make_plan(g, z);
        const cplx want = std::polar(1.0, 2.0 * kPi * z / g.wavelength);
        CHECK(std::abs(plan.transfer[0] - want) < 1e-12);
    }
}

TEST_CASE("plan: unit modulus on mask, conjugate for -z") {
    Grid g(48, 40, 5e-6, 633e-9);
    const auto plus = optics::make_plan(g, 0.013);
    const auto minus = optics::make_plan(g, -0.013);
    for (std::size_t i = 0; i < plus.transfer.size(); ++i) {
        CHECK(plus.band_mask[i] == minus.band_mask[i]);
        if (plus.band_mask[i]) {
            CHECK(std::abs(std::abs(plus.transfer[i]) - 1.0) < 1e-14);
            CHECK(minus.transfer[i] == std::conj(plus.transfer[i]));
        }
    }
}

TEST_CASE("propagate: constant field picks up the DC phase only") {
    Grid g(32, 32, 3.45e-6, 561e-9);
    const double z = 0.05;
    const auto plan = optics::make_plan(g, z);
    ComplexField f(g, cplx(2.5, -1.0));
    const ComplexField out = optics::propagate(f, plan);
    const cplx want = cplx(2.5, -1.0) * std::polar(1.0, 2.0 * kPi * z / g.wavelength);
    for (const cplx& v : out.v) CHECK(std::abs(v - want) < 1e-12 * std::abs(want));
}

TEST_CASE("propagate: round trip and energy conservation on the band") {
    Grid g(64, 64, 3.45e-6, 561e-9);
    const double z = 0.01;
    const auto plan = optics::make_plan(g, z);
    const auto plan_back = optics::make_plan(g, -z);
    const ComplexField f = random_band_confined(g, plan, 99);

    const ComplexField fwd = optics::propagate(f, plan);
    const ComplexField back = optics::propagate(fwd, plan_back);
    double max_err = 0.0;
    for (std::size_t i = 0; i < f.v.size(); ++i)
        max_err = std::max(max_err, std::abs(back.v[i] - f.v[i]));
    CHECK(max_err < 1e-10);

    const double e0 = f.power();
    const double e1 = fwd.power();
    CHECK(std::fabs(e1 - e0) < 1e-12 * e0);
}

TEST_CASE("propagate is linear") {
    Grid g(32, 32, 3.45e-6, 561e-9);
    const auto plan = optics::make_plan(g, 0.004);
    Rng rng(5, "lin");
    ComplexField u(g), v(g);
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        u.v[i] = cplx(rng.normal(), rng.normal());
        v.v[i] = cplx(rng.normal(), rng.normal());
    }
    const cplx a(0.7, -1.3), b(-0.2, 0.9);
    ComplexField mix(g);
    for (std::size_t i = 0; i < u.v.size(); ++i) mix.v[i] = a * u.v[i] + b * v.v[i];
    const ComplexField lhs = optics::propagate(mix, plan);
    const ComplexField pu = optics::propagate(u, plan);
    const ComplexField pv = optics::propagate(v, plan);
    double scale = 0.0;
    for (const auto& z : lhs.v) scale = std::max(scale, std::abs(z));
    for (std::size_t i = 0; i < lhs.v.size(); ++i)
        CHECK(std::abs(lhs.v[i] - (a * pu.v[i] + b * pv.v[i])) < 1e-12 * scale);
}

TEST_CASE("propagate rejects grid mismatch") {
    Grid g1(32, 32, 3.45e-6, 561e-9);
    Grid g2(16, 16, 3.45e-6, 561e-9);
    const auto plan = optics::make_plan(g1, 0.01);
    ComplexField f(g2);
    CHECK_THROWS_AS(optics::propagate(f, plan), DataError);
}

TEST_CASE("propagate matches direct Rayleigh-Sommerfeld summation") {
    Grid g(64, 64, 3.45e-6, 561e-9);
    const double z = 1e-3;
    // centered 8-pixel disk; the apodized edge keeps the aperture spectrum
    // well below Nyquist so the sampled field faithfully represents it
    const double diameter = 8 * g.pitch, edge = 5 * g.pitch;
    const ComplexField disk = optics::synthesize_probe(g, diameter, edge, 1.0);
    const ComplexField asm_out = optics::propagate(disk, optics::make_plan(g, z));
    const ComplexField rs_out =
        oracles::rayleigh_sommerfeld_disk(g, diameter, edge, std::abs(disk.at(g.nx / 2, g.ny / 2)), z);

    double max_ref = 0.0, max_err = 0.0;
    for (std::size_t i = 0; i < rs_out.v.size(); ++i) {
        max_ref = std::max(max_ref, std::abs(rs_out.v[i]));
        max_err = std::max(max_err, std::abs(rs_out.v[i] - asm_out.v[i]));
    }
    CHECK(max_ref > 0.0);
    CHECK(max_err / max_ref < 1e-3);
}

TEST_CASE("exit wave") {
    Grid pg(2, 2, 1e-6, 5e-7);
    ComplexField probe(pg);
    probe.at(0, 0) = {1.0, 0.0};
    probe.at(1, 0) = {0.0, 1.0};
    probe.at(0, 1) = {-1.0, 0.0};
    probe.at(1, 1) = {2.0, 0.0};

    Grid og(4, 4, 1e-6, 5e-7);
    ComplexField object(og, cplx(1.0, 0.0));
    object.at(1, 1) = {1.0, 0.0};
    object.at(2, 1) = {0.0, 0.0};
    object.at(1, 2) = {0.5, 0.0};
    object.at(2, 2) = {1.0, 0.0};

    const ComplexField psi = optics::exit_wave(probe, object, 1, 1);
    CHECK(psi.at(0, 0) == cplx(1.0, 0.0));
    CHECK(psi.at(1, 0) == cplx(0.0, 0.0));
    CHECK(psi.at(0, 1) == cplx(-0.5, 0.0));
    CHECK(psi.at(1, 1) == cplx(2.0, 0.0));

    // object of ones returns the probe; zero probe returns zero
    ComplexField ones(og, cplx(1.0, 0.0));
    const ComplexField same = optics::exit_wave(probe, ones, 2, 2);
    for (std::size_t i = 0; i < probe.v.size(); ++i) CHECK(same.v[i] == probe.v[i]);
    ComplexField zero_probe(pg, cplx(0.0, 0.0));
    const ComplexField zpsi = optics::exit_wave(zero_probe, object, 0, 0);
    for (const cplx& v : zpsi.v) CHECK(v == cplx(0.0, 0.0));

    CHECK_THROWS_AS(optics::exit_wave(probe, object, 3, 0), DataError);
}

TEST_CASE("intensity") {
    Grid g(2, 2, 1e-6, 5e-7);
    ComplexField f(g);
    f.at(0, 0) = {3.0, 4.0};
    const RealImage I = optics::intensity(f);
    CHECK(I.at(0, 0) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(I.at(1, 1) == 0.0);

    // Parseval under our FFT convention: sum |psi|^2 = (1/N) sum |FFT(psi)|^2
    Grid g2(16, 16, 1e-6, 5e-7);
    ComplexField r(g2);
    Rng rng(3, "parseval");
    for (cplx& z : r.v) z = cplx(rng.normal(), rng.normal());
    double direct = r.power();
    ComplexField spec = r;
    optics::fft2(spec);
    const double via_spec = spec.power() / static_cast<double>(g2.size());
    CHECK(std::fabs(direct - via_spec) < 1e-12 * direct);
}

TEST_CASE("synthesize_probe") {
    Grid g(64, 64, 3.45e-6, 561e-9);
    const double diameter = 24 * g.pitch, edge = 5 * g.pitch;
    const ComplexField p = optics::synthesize_probe(g, diameter, edge, 1e6);
    CHECK(std::fabs(p.power() - 1e6) < 1e-9 * 1e6);
    CHECK(std::fabs(p.power() - 1e6) < 1e-3);

    // center amplitude against an independently recomputed profile area
    double area = 0.0;
    const double cx = (g.nx - 1) / 2.0, cy = (g.ny - 1) / 2.0;
    for (int y = 0; y < g.ny; ++y)
        for (int x = 0; x < g.nx; ++x) {
            const double r = std::hypot((x - cx) * g.pitch, (y - cy) * g.pitch);
            double a = 0.0;
            if (r <= diameter / 2.0)
                a = 1.0;
            else if (r < diameter / 2.0 + edge)
                a = 0.5 * (1.0 + std::cos(kPi * (r - diameter / 2.0) / edge));
            area += a * a;
        }
    const double want_center = std::sqrt(1e6 / area);
    CHECK(std::abs(p.at(g.nx / 2, g.ny / 2)) == doctest::Approx(want_center).epsilon(1e-9));

    // zero beyond diameter/2 + edge_width
    for (int y = 0; y < g.ny; ++y)
        for (int x = 0; x < g.nx; ++x) {
            const double r = std::hypot((x - cx) * g.pitch, (y - cy) * g.pitch);
            if (r > diameter / 2.0 + edge + g.pitch) CHECK(p.at(x, y) == cplx(0.0, 0.0));
        }

    CHECK_THROWS_AS(optics::synthesize_probe(g, 65 * g.pitch, edge, 1.0), ConfigError);
    CHECK_THROWS_AS(optics::synthesize_probe(g, diameter, edge, 0.0), ConfigError);
}
