#include "mgp/normal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace mgp::normal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre half-rules (abscissae on (0, 1), weights) with 6, 12 and 20 points.
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 3> kX6 = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                        0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 6> kX12 = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                        0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 10> kW20 = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                         0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                         0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                         0.1527533871307259};
constexpr std::array<double, 10> kX20 = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                         0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                         0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                         0.07652652113349733};

// Upper orthant P(X > h, Y > k).
double bvn_upper(double h, double k, double r) noexcept {
    if (std::isinf(h) && h > 0) return 0.0;
    if (std::isinf(k) && k > 0) return 0.0;
    if (std::isinf(h)) return std::isinf(k) ? 1.0 : cdf(-k);
    if (std::isinf(k)) return cdf(-h);
    if (r == 0.0) return cdf(-h) * cdf(-k);

    const double* w = kW20.data();
    const double* x = kX20.data();
    std::size_t ng = kW20.size();
    if (std::abs(r) < 0.3) {
        w = kW6.data();
        x = kX6.data();
        ng = kW6.size();
    } else if (std::abs(r) < 0.75) {
        w = kW12.data();
        x = kX12.data();
        ng = kW12.size();
    }

    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        for (std::size_t i = 0; i < ng; ++i) {
            for (const double node : {1.0 - x[i], 1.0 + x[i]}) {
                const double sn = std::sin(asr * node);
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        return std::clamp(bvn * asr / kTwoPi + cdf(-h) * cdf(-k), 0.0, 1.0);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = 1.0 - r * r;
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 80.0;
        double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        if (hk > -100.0) {
            const double b = std::sqrt(bs);
            const double sp = std::sqrt(kTwoPi) * cdf(-b / a);
            bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < ng; ++i) {
            for (const double node : {1.0 - x[i], 1.0 + x[i]}) {
                const double xs = (a * node) * (a * node);
                asr = -(bs / xs + hk) / 2.0;
                if (asr <= -100.0) continue;
                const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                const double rs = std::sqrt(1.0 - xs);
                const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                sum += w[i] * std::exp(asr) * (sp - ep);
            }
        }
        bvn = (a * sum - bvn) / kTwoPi;
    }
    if (r > 0.0) {
        bvn += cdf(-std::max(h, k));
    } else if (h >= k) {
        bvn = -bvn;
    } else {
        const double span = h < 0.0 ? cdf(k) - cdf(h) : cdf(-h) - cdf(-k);
        bvn = span - bvn;
    }
    return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace

double pdf(double z) noexcept {
    return std::exp(-0.5 * z * z) / std::sqrt(kTwoPi);
}

double cdf(double z) noexcept {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double clamp_prob(double p) noexcept {
    return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double quantile(double p) noexcept {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * clamp_prob(p));
}

double bivariate_cdf(double h, double k, double r) noexcept {
    return bvn_upper(-h, -k, r);
}

}  // namespace mgp::normal

namespace mgp::gaussian_copula {

double density_scores(double a, double b, double rho) noexcept {
    const double one_minus = 1.0 - rho * rho;
    return std::exp(-(rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * one_minus)) /
           std::sqrt(one_minus);
}

double density(double u, double v, double rho) noexcept {
    return density_scores(normal::quantile(u), normal::quantile(v), rho);
}

double h_function(double u, double v, double rho) noexcept {
    return normal::cdf((normal::quantile(u) - rho * normal::quantile(v)) / std::sqrt(1.0 - rho * rho));
}

double cdf(double u, double v, double rho) noexcept {
    return normal::bivariate_cdf(normal::quantile(u), normal::quantile(v), rho);
}

}  // namespace mgp::gaussian_copula
