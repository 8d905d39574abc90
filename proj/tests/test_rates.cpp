#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "p2pswarm/rates.hpp"

using namespace p2pswarm;
constexpr double pi = std::numbers::pi;

TEST(RateKind, NamesRoundTrip) {
    for (auto k : {RateKind::Tcp, RateKind::Udp, RateKind::AffineRtt, RateKind::Overhead, RateKind::PerFlowCap,
                   RateKind::SnrRange, RateKind::SnrInfinite}) {
        EXPECT_EQ(rate_kind_from_string(to_string(k)), k);
    }
    EXPECT_THROW(rate_kind_from_string("quic"), std::invalid_argument);
}

TEST(RateModel, FactoryValidation) {
    EXPECT_THROW(RateModel::tcp(0.0, 0.1), std::invalid_argument);
    EXPECT_THROW(RateModel::tcp(1.0, -0.1), std::invalid_argument);
    EXPECT_THROW(RateModel::udp(1.0, std::numeric_limits<double>::infinity()), std::invalid_argument);
    EXPECT_THROW(RateModel::affine_rtt(1.0, 0.0, 0.1), std::invalid_argument);
    EXPECT_THROW(RateModel::overhead(1.0, 20.0, 0.1), std::invalid_argument);  // R > C/c
    EXPECT_NO_THROW(RateModel::overhead(1.0, 10.0, 0.1));
    EXPECT_THROW(RateModel::per_flow_cap(1.0, 0.0, 0.1), std::invalid_argument);
    EXPECT_THROW(RateModel::snr_range(1.0, 2.0, 1.0), std::invalid_argument);
    EXPECT_THROW(RateModel::snr_infinite(1.0, 1.5), std::invalid_argument);
}

TEST(PairRate, RangeCutAndProfile) {
    const auto m = RateModel::tcp(2.0, 0.1);
    EXPECT_DOUBLE_EQ(pair_rate(m, 0.05), 40.0);
    EXPECT_DOUBLE_EQ(pair_rate(m, 0.1), 20.0);  // closed ball
    EXPECT_EQ(pair_rate(m, 0.1000001), 0.0);
    EXPECT_GT(rate_profile(m, 0.5), 0.0);
    EXPECT_TRUE(std::isfinite(pair_rate(m, 0.0)));
    const auto cap = RateModel::per_flow_cap(1.0, 50.0, 0.1);
    EXPECT_DOUBLE_EQ(pair_rate(cap, 0.001), 50.0);
    EXPECT_DOUBLE_EQ(pair_rate(cap, 0.05), 20.0);
    const auto ov = RateModel::overhead(1.0, 5.0, 0.2);
    EXPECT_NEAR(pair_rate(ov, 0.1), 5.0, 1e-12);
    EXPECT_NEAR(pair_rate(ov, 0.2), 0.0, 1e-12);
}

TEST(Gamma, TcpAndUdpExact) {
    EXPECT_DOUBLE_EQ(gamma(RateModel::tcp(1.0, 0.1)), 2.0 * pi * 0.1);
    EXPECT_DOUBLE_EQ(gamma(RateModel::udp(3.0, 0.2)), pi * 3.0 * 0.04);
}

TEST(Gamma, ClosedFormsAgainstOracle) {
    std::vector<RateModel> models{
        RateModel::tcp(1.0, 0.1),           RateModel::udp(2.0, 0.3),
        RateModel::affine_rtt(1.5, 0.02, 0.1), RateModel::affine_rtt(1.0, 5.0, 0.1),
        RateModel::overhead(1.0, 3.0, 0.3), RateModel::overhead(2.0, 10.0, 0.2),
        RateModel::per_flow_cap(1.0, 20.0, 0.1), RateModel::per_flow_cap(1.0, 5.0, 0.1),
        RateModel::snr_range(1.0, 4.0, 1.0), RateModel::snr_range(1e-4, 4.0, 0.3),
        RateModel::snr_range(2.0, 3.0, 2.0), RateModel::snr_infinite(1.0, 4.0),
        RateModel::snr_infinite(0.3, 3.5),  RateModel::snr_infinite(5.0, 6.0),
        RateModel::snr_infinite(1.0, 2.5)};
    for (const auto& m : models) {
        const double ref = oracle::gamma(m);
        EXPECT_NEAR(gamma(m), ref, 1e-9 * ref) << to_string(m.kind) << " C=" << m.C << " R=" << m.R;
        EXPECT_NEAR(gamma_quadrature(m), ref, 1e-8 * ref) << to_string(m.kind);
    }
}

TEST(Gamma, SnrInfiniteIsLimitOfTruncation) {
    const auto inf = RateModel::snr_infinite(1.0, 4.0);
    const double g = gamma(inf);
    double prev = 0.0;
    for (double R : {1.0, 10.0, 100.0, 1000.0}) {
        const double gr = gamma(inf.truncated(R));
        EXPECT_GT(gr, prev);
        EXPECT_LT(gr, g);
        prev = gr;
    }
    EXPECT_NEAR(prev, g, 1e-5 * g);
}

TEST(Gamma, RandomisedPropertyGrid) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto logu = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(rng)); };
    for (int i = 0; i < 60; ++i) {
        const double C = logu(0.1, 10.0), R = logu(0.01, 2.0);
        std::vector<RateModel> ms{RateModel::tcp(C, R), RateModel::udp(C, R),
                                  RateModel::affine_rtt(C, logu(1e-3, 1.0), R),
                                  RateModel::per_flow_cap(C, logu(0.1, 100.0), R)};
        for (const auto& m : ms) {
            const double g = gamma(m);
            EXPECT_GT(g, 0.0);
            // enlarging the range never lowers gamma
            EXPECT_GE(gamma(m.truncated(R)), gamma(RateModel{m}.truncated(0.5 * R)));
            if (linear_in_C(m.kind)) {
                RateModel twice = m;
                twice.C *= 2.0;
                EXPECT_NEAR(gamma(twice), 2.0 * g, 1e-12 * g);
            }
        }
    }
}

TEST(SecondMoment, AgainstOracle) {
    std::vector<RateModel> models{RateModel::tcp(1.0, 0.1), RateModel::udp(2.0, 0.3),
                                  RateModel::affine_rtt(1.5, 0.02, 0.1), RateModel::affine_rtt(1.0, 50.0, 0.1),
                                  RateModel::overhead(1.0, 3.0, 0.3),  RateModel::per_flow_cap(1.0, 20.0, 0.1),
                                  RateModel::per_flow_cap(1.0, 5.0, 0.1), RateModel::snr_range(1.0, 4.0, 1.0),
                                  RateModel::snr_infinite(1.0, 4.0),   RateModel::snr_infinite(2.0, 5.0)};
    for (const auto& m : models) {
        const double ref = oracle::moment(m, 2);
        EXPECT_NEAR(second_moment(m), ref, 1e-9 * ref) << to_string(m.kind);
        EXPECT_NEAR(second_moment_quadrature(m), ref, 1e-8 * ref) << to_string(m.kind);
    }
    EXPECT_THROW(second_moment(RateModel::snr_infinite(1.0, 3.0)), std::invalid_argument);
}

TEST(TypicalRange, TcpHalfUdpTwoThirds) {
    EXPECT_NEAR(typical_range(RateModel::tcp(1.0, 0.1)), 0.05, 1e-15);
    EXPECT_NEAR(typical_range(RateModel::udp(1.0, 0.3)), 0.2, 1e-15);
    const auto m = RateModel::per_flow_cap(1.0, 7.0, 0.4);
    EXPECT_GT(typical_range(m), 0.0);
    EXPECT_LT(typical_range(m), m.R);
}

TEST(DiskIntegral, MatchesTruncatedGamma) {
    const auto m = RateModel::tcp(1.0, 0.1);
    EXPECT_DOUBLE_EQ(disk_integral(m, 0.01), 2.0 * pi * 0.01);
    EXPECT_DOUBLE_EQ(disk_integral(m, 1.0), gamma(m));
    EXPECT_EQ(disk_integral(m, 0.0), 0.0);
}

TEST(Quadrature, RejectsBadTolerance) {
    EXPECT_THROW(gamma_quadrature(RateModel::tcp(1.0, 0.1), 0.0), std::invalid_argument);
    EXPECT_THROW(gamma_quadrature(RateModel::tcp(1.0, 0.1), 0.1), std::invalid_argument);
}
